"""Synthetic paired corpora with planted corruptions, plus a binary file format.

Each sample is a pair of vectors (view A, view B) drawn around a shared class
prototype.  Corruptions are planted at generation time so that pruning quality
can be scored against ground truth:

* ``MISMATCHED`` rows get view B from a different class (a bad pair).
* ``DUPLICATE`` rows are near-copies of an earlier clean row (redundant data).

All randomness comes from numpy's PCG64 generator seeded with ``GenSpec.seed``,
so equal seeds reproduce bit-identical datasets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CLEAN = 0
MISMATCHED = 1
DUPLICATE = 2

_MAGIC = b"SCND"
_VERSION = 1
_MAX_PROTO_DOT = 0.5


class DatasetError(Exception):
    """Base class for dataset validation and I/O failures."""


class ValidationError(DatasetError):
    """A GenSpec or dataset violates its invariants."""


class BadMagicError(DatasetError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(DatasetError):
    """File declares an unsupported format version."""


class TruncatedFileError(DatasetError):
    """File ends before all declared payload bytes."""


@dataclass(frozen=True)
class GenSpec:
    """Parameters for synthetic corpus generation."""

    n: int
    dim: int
    num_classes: int
    mismatch_frac: float
    duplicate_frac: float
    noise_sigma: float
    seed: int

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.n < self.num_classes:
            raise ValidationError("n must be >= num_classes")
        if self.dim < 2:
            raise ValidationError("dim must be >= 2")
        if not (0.0 <= self.mismatch_frac <= 1.0) or not (0.0 <= self.duplicate_frac <= 1.0):
            raise ValidationError("corruption fractions must lie in [0, 1]")
        if self.mismatch_frac + self.duplicate_frac > 1.0:
            raise ValidationError("mismatch_frac + duplicate_frac must be <= 1")
        if self.noise_sigma < 0.0:
            raise ValidationError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class PairedDataset:
    """Immutable corpus of paired vectors; sample ids are row indices."""

    view_a: np.ndarray  # n x dim, float32
    view_b: np.ndarray  # n x dim, float32
    labels: np.ndarray  # n, uint32
    corruption: np.ndarray  # n, uint8
    num_classes: int

    @property
    def n(self) -> int:
        return self.view_a.shape[0]

    @property
    def dim(self) -> int:
        return self.view_a.shape[1]

    def validate(self) -> None:
        if self.view_a.shape != self.view_b.shape:
            raise ValidationError("view_a and view_b must have identical shape")
        if self.view_a.ndim != 2:
            raise ValidationError("views must be n x dim matrices")
        if not (np.isfinite(self.view_a).all() and np.isfinite(self.view_b).all()):
            raise ValidationError("views must be finite")
        if self.labels.shape != (self.n,) or self.corruption.shape != (self.n,):
            raise ValidationError("labels and corruption must have length n")
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise ValidationError("labels must be < num_classes")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PairedDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.view_a, other.view_a)
            and np.array_equal(self.view_b, other.view_b)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.corruption, other.corruption)
        )


def _class_prototypes(rng: np.random.Generator, num_classes: int, dim: int) -> np.ndarray:
    """Unit prototypes with pairwise dot <= 0.5, drawn by rejection sampling."""
    protos = np.empty((num_classes, dim))
    for c in range(num_classes):
        for attempt in range(10_000):
            v = rng.standard_normal(dim)
            v /= np.linalg.norm(v)
            if c == 0 or np.max(protos[:c] @ v) <= _MAX_PROTO_DOT:
                protos[c] = v
                break
        else:
            raise ValidationError(
                f"could not place {num_classes} prototypes with pairwise dot <= "
                f"{_MAX_PROTO_DOT} in {dim} dimensions"
            )
    return protos


def generate_paired_dataset(spec: GenSpec) -> PairedDataset:
    """Generate a corpus per ``spec``; deterministic for a fixed seed."""
    spec.validate()
    # Tiny bias guards against float artifacts like 0.29 * 100 == 28.999...
    n_mm = int(spec.mismatch_frac * spec.n + 1e-9)
    n_dup = int(spec.duplicate_frac * spec.n + 1e-9)
    if n_dup > 0 and n_mm + n_dup >= spec.n:
        raise ValidationError("duplicates require at least one clean row")

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    protos = _class_prototypes(rng, spec.num_classes, spec.dim)

    labels = np.arange(spec.n, dtype=np.uint32) % spec.num_classes
    labels = labels[rng.permutation(spec.n)]

    corruption = np.zeros(spec.n, dtype=np.uint8)
    # Row 0 stays clean so every duplicate has an earlier clean source.
    corrupt_ids = rng.permutation(np.arange(1, spec.n))[: n_mm + n_dup] if spec.n > 1 else np.array([], dtype=int)
    corruption[corrupt_ids[:n_mm]] = MISMATCHED
    corruption[corrupt_ids[n_mm:]] = DUPLICATE

    view_a = np.empty((spec.n, spec.dim))
    view_b = np.empty((spec.n, spec.dim))
    sigma = spec.noise_sigma
    clean_so_far: list[int] = []
    for i in range(spec.n):
        flag = corruption[i]
        if flag == DUPLICATE:
            j = clean_so_far[rng.integers(len(clean_so_far))]
            labels[i] = labels[j]
            view_a[i] = view_a[j] + 0.1 * sigma * rng.standard_normal(spec.dim)
            view_b[i] = view_b[j] + 0.1 * sigma * rng.standard_normal(spec.dim)
            continue
        view_a[i] = protos[labels[i]] + sigma * rng.standard_normal(spec.dim)
        if flag == MISMATCHED:
            other = int(rng.integers(spec.num_classes - 1))
            if other >= labels[i]:
                other += 1
            view_b[i] = protos[other] + sigma * rng.standard_normal(spec.dim)
        else:
            view_b[i] = protos[labels[i]] + sigma * rng.standard_normal(spec.dim)
            clean_so_far.append(i)

    ds = PairedDataset(
        view_a=view_a.astype(np.float32),
        view_b=view_b.astype(np.float32),
        labels=labels,
        corruption=corruption,
        num_classes=spec.num_classes,
    )
    ds.validate()
    return ds


def save_dataset(ds: PairedDataset, path) -> None:
    """Write the little-endian binary format (magic SCND, version 1)."""
    ds.validate()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, ds.n, ds.dim))
        fh.write(struct.pack("<I", ds.num_classes))
        fh.write(np.ascontiguousarray(ds.view_a, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.view_b, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(ds.corruption, dtype="u1").tobytes())


def _read_exact(fh, count: int) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncatedFileError(f"expected {count} bytes, got {len(buf)}")
    return buf


def load_dataset(path) -> PairedDataset:
    """Read a dataset written by :func:`save_dataset`; bit-exact round trip."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise BadMagicError(f"bad magic {magic!r}")
        version, n, dim = struct.unpack("<III", _read_exact(fh, 12))
        if version != _VERSION:
            raise VersionMismatchError(f"unsupported version {version}")
        (num_classes,) = struct.unpack("<I", _read_exact(fh, 4))
        view_a = np.frombuffer(_read_exact(fh, 4 * n * dim), dtype="<f4").reshape(n, dim)
        view_b = np.frombuffer(_read_exact(fh, 4 * n * dim), dtype="<f4").reshape(n, dim)
        labels = np.frombuffer(_read_exact(fh, 4 * n), dtype="<u4")
        corruption = np.frombuffer(_read_exact(fh, n), dtype="u1")
    ds = PairedDataset(
        view_a=view_a.copy(),
        view_b=view_b.copy(),
        labels=labels.copy(),
        corruption=corruption.copy(),
        num_classes=int(num_classes),
    )
    ds.validate()
    return ds
