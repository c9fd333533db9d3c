"""Two-tower encoder: a linear (or one-hidden-layer tanh) map per tower,
L2-normalized outputs, and a learnable log-temperature.

All arithmetic is float64 with fixed-order numpy reductions, so forward passes
are bit-reproducible.  The temperature is parameterized in log space and
clamped to [0.01, 100] after every update to prevent collapse or overflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

TEMP_MIN = 0.01
TEMP_MAX = 100.0


def _log_bound(limit: float, toward: float) -> float:
    # largest/smallest log value whose exp stays inside the clamp interval
    x = math.log(limit)
    while not (TEMP_MIN <= math.exp(x) <= TEMP_MAX):
        x = math.nextafter(x, toward)
    return x


LOG_TEMP_MIN = _log_bound(TEMP_MIN, math.inf)
LOG_TEMP_MAX = _log_bound(TEMP_MAX, -math.inf)
INIT_TEMP = 1.0 / 0.07


class EncoderError(Exception):
    pass


class Tower(enum.Enum):
    F = "f"
    G = "g"


@dataclass
class EncoderParams:
    """Weights of both towers plus the shared log-temperature.

    ``w_f`` / ``w_g`` are the output layers (out_dim x in_features).  For the
    MLP variant ``w_f_hidden`` / ``w_g_hidden`` hold the hidden layers
    (hidden x dim) and the output layers act on tanh activations.
    """

    w_f: np.ndarray
    w_g: np.ndarray
    log_temp: float
    w_f_hidden: np.ndarray | None = None
    w_g_hidden: np.ndarray | None = None

    @property
    def is_mlp(self) -> bool:
        return self.w_f_hidden is not None

    @property
    def dim(self) -> int:
        return (self.w_f_hidden if self.is_mlp else self.w_f).shape[1]

    @property
    def out_dim(self) -> int:
        return self.w_f.shape[0]

    @property
    def temp(self) -> float:
        return math.exp(self.log_temp)

    def clamp_temp(self) -> None:
        self.log_temp = min(max(self.log_temp, LOG_TEMP_MIN), LOG_TEMP_MAX)

    def copy(self) -> "EncoderParams":
        return replace(
            self,
            w_f=self.w_f.copy(),
            w_g=self.w_g.copy(),
            w_f_hidden=None if self.w_f_hidden is None else self.w_f_hidden.copy(),
            w_g_hidden=None if self.w_g_hidden is None else self.w_g_hidden.copy(),
        )


def init_params(
    dim: int,
    out_dim: int,
    seed: int,
    mlp: bool = False,
    hidden_dim: int | None = None,
) -> EncoderParams:
    """Initialize both towers i.i.d. uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].

    The temperature starts at 1/0.07, the usual contrastive default.
    """
    if dim < 1 or out_dim < 1:
        raise EncoderError("dim and out_dim must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    bound = 1.0 / math.sqrt(dim)
    log_temp = math.log(INIT_TEMP)
    if not mlp:
        w_f = rng.uniform(-bound, bound, size=(out_dim, dim))
        w_g = rng.uniform(-bound, bound, size=(out_dim, dim))
        return EncoderParams(w_f=w_f, w_g=w_g, log_temp=log_temp)
    hidden = hidden_dim if hidden_dim is not None else dim
    if hidden < 1:
        raise EncoderError("hidden_dim must be >= 1")
    hbound = 1.0 / math.sqrt(hidden)
    w_f_hidden = rng.uniform(-bound, bound, size=(hidden, dim))
    w_f = rng.uniform(-hbound, hbound, size=(out_dim, hidden))
    w_g_hidden = rng.uniform(-bound, bound, size=(hidden, dim))
    w_g = rng.uniform(-hbound, hbound, size=(out_dim, hidden))
    return EncoderParams(
        w_f=w_f, w_g=w_g, log_temp=log_temp, w_f_hidden=w_f_hidden, w_g_hidden=w_g_hidden
    )


def _tower_weights(params: EncoderParams, tower: Tower):
    if tower is Tower.F:
        return params.w_f_hidden, params.w_f
    return params.w_g_hidden, params.w_g


def forward_tower(params: EncoderParams, tower: Tower, x: np.ndarray):
    """Raw forward pass returning (pre-norm z, hidden activations or None)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dim:
        raise EncoderError(f"input must be batch x {params.dim}, got {x.shape}")
    w_hidden, w_out = _tower_weights(params, tower)
    if w_hidden is None:
        return x @ w_out.T, None
    h = np.tanh(x @ w_hidden.T)
    return h @ w_out.T, h


def normalize_rows(z: np.ndarray):
    """L2-normalize rows; exactly-zero rows are passed through and flagged."""
    norms = np.linalg.norm(z, axis=1)
    zero_rows = norms == 0.0
    safe = np.where(zero_rows, 1.0, norms)
    return z / safe[:, None], zero_rows


def encode(params: EncoderParams, tower: Tower, x: np.ndarray):
    """Unit-norm embeddings of ``x`` under one tower.

    Returns ``(embeddings, zero_rows)`` where ``zero_rows`` flags inputs whose
    pre-normalization output was exactly zero (those rows stay zero).
    """
    z, _ = forward_tower(params, tower, x)
    return normalize_rows(z)
