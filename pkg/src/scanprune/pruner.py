"""Candidate extraction from per-sample losses, accumulation, and pruning draws.

Per batch and per loss direction, the k lowest-loss samples are tagged
redundant and the k highest ill-matched (k = floor(rho * batch)).  The two
directions are merged by intersection first, then topped up from a combined
rank ordering so each category always contributes exactly k ids.  Candidate
sets accumulate over one preparation epoch and are redrawn from scratch each
round; mutation epochs exclude a seeded uniform draw from the candidates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class PrunerError(Exception):
    pass


class Tag(enum.Enum):
    REDUNDANT = "redundant"
    ILL_MATCHED = "ill_matched"


@dataclass(frozen=True)
class CandidateEntry:
    sample_id: int
    tag: Tag
    rank_score: float  # higher = more confidently prunable


@dataclass
class CandidateSet:
    entries: list[CandidateEntry] = field(default_factory=list)
    built_at_epoch: int = 0

    def ids(self) -> list[int]:
        return [e.sample_id for e in self.entries]

    def ids_by_tag(self, tag: Tag) -> list[int]:
        return [e.sample_id for e in self.entries if e.tag is tag]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ActiveView:
    excluded: frozenset
    epoch: int


@dataclass(frozen=True)
class RankedFallback:
    """Batch ids ordered by combined two-direction extremity, ties by id."""

    red_order: list  # most redundant (lowest combined loss rank) first
    ill_order: list  # most ill-matched (highest combined loss rank) first


def _ascending_order(losses: np.ndarray, ids: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary, so sort by loss then id.
    return np.lexsort((ids, losses))


def select_batch_candidates(losses, ids, rho: float):
    """Ids of the k smallest (redundant) and k largest (ill-matched) losses.

    Ties break toward ascending id on the small end and descending id on the
    large end, so the two selections are exact mirrors and never overlap.
    """
    if not (0.0 < rho < 0.5):
        raise PrunerError("rho must lie in (0, 0.5)")
    losses = np.asarray(losses, dtype=np.float64)
    ids = np.asarray(ids)
    if not np.isfinite(losses).all():
        raise PrunerError("losses must be finite")
    k = int(rho * losses.shape[0] + 1e-9)
    order = _ascending_order(losses, ids)
    red = set(ids[order[:k]].tolist())
    ill = set(ids[order[losses.shape[0] - k:]].tolist())
    return red, ill


def rank_orders(fg_losses, gf_losses, ids) -> RankedFallback:
    """Combined-rank orderings used for merge top-up and confidence scores."""
    fg_losses = np.asarray(fg_losses, dtype=np.float64)
    gf_losses = np.asarray(gf_losses, dtype=np.float64)
    ids = np.asarray(ids)
    b = ids.shape[0]
    rank_fg = np.empty(b, dtype=np.int64)
    rank_fg[_ascending_order(fg_losses, ids)] = np.arange(b)
    rank_gf = np.empty(b, dtype=np.int64)
    rank_gf[_ascending_order(gf_losses, ids)] = np.arange(b)
    red_rank = rank_fg + rank_gf
    ill_rank = (b - 1 - rank_fg) + (b - 1 - rank_gf)
    red_order = [int(ids[i]) for i in np.lexsort((ids, red_rank))]
    ill_order = [int(ids[i]) for i in np.lexsort((ids, ill_rank))]
    return RankedFallback(red_order=red_order, ill_order=ill_order)


def merge_directions(fg_red, fg_ill, gf_red, gf_ill, target: int, ranked_fallback: RankedFallback):
    """Merge per-direction selections into k redundant + k ill-matched ids.

    The cross-direction intersections form the core; each category is then
    topped up to target/2 from the combined rank ordering.  The redundant
    category claims contested ids first, so no id carries both tags.
    """
    if target % 2 != 0:
        raise PrunerError("target must be even (equal category split)")
    k = target // 2
    red = sorted(set(fg_red) & set(gf_red))[:k]
    chosen = set(red)
    for sid in ranked_fallback.red_order:
        if len(red) >= k:
            break
        if sid not in chosen:
            red.append(sid)
            chosen.add(sid)
    ill = sorted(sid for sid in (set(fg_ill) & set(gf_ill)) if sid not in chosen)[:k]
    chosen.update(ill)
    for sid in ranked_fallback.ill_order:
        if len(ill) >= k:
            break
        if sid not in chosen:
            ill.append(sid)
            chosen.add(sid)
    return set(red), set(ill)


def batch_candidates(fg_losses, gf_losses, ids, rho: float) -> list[CandidateEntry]:
    """Full per-batch pipeline: per-direction selection, merge, scoring.

    Equivalent to composing select_batch_candidates / rank_orders /
    merge_directions, but operates on batch positions with boolean masks so
    the per-batch cost stays negligible next to the gradient step.
    """
    if not (0.0 < rho < 0.5):
        raise PrunerError("rho must lie in (0, 0.5)")
    ids = np.asarray(ids)
    b = ids.shape[0]
    k = int(rho * b + 1e-9)
    if k == 0:
        return []
    fg = np.asarray(fg_losses, dtype=np.float64)
    gf = np.asarray(gf_losses, dtype=np.float64)
    if not (np.isfinite(fg).all() and np.isfinite(gf).all()):
        raise PrunerError("losses must be finite")

    arange = np.arange(b)
    rank_fg = np.empty(b, dtype=np.int64)
    rank_fg[np.lexsort((ids, fg))] = arange
    rank_gf = np.empty(b, dtype=np.int64)
    rank_gf[np.lexsort((ids, gf))] = arange
    red_rank = rank_fg + rank_gf
    red_order = np.lexsort((ids, red_rank))
    ill_order = np.lexsort((ids, -red_rank))

    def by_id(positions: np.ndarray) -> np.ndarray:
        return positions[np.argsort(ids[positions], kind="stable")]

    chosen = np.zeros(b, dtype=bool)
    core = arange[(rank_fg < k) & (rank_gf < k)]
    if core.shape[0] > k:
        core = by_id(core)[:k]
    chosen[core] = True
    fill = red_order[~chosen[red_order]][: k - core.shape[0]]
    chosen[fill] = True
    red = np.concatenate((core, fill))

    core = arange[(rank_fg >= b - k) & (rank_gf >= b - k) & ~chosen]
    if core.shape[0] > k:
        core = by_id(core)[:k]
    chosen[core] = True
    fill = ill_order[~chosen[ill_order]][: k - core.shape[0]]
    ill = np.concatenate((core, fill))

    # Confidence: distance of the combined rank from the category's far end,
    # normalized to [0, 1] so scores are comparable across batch sizes.
    denom = max(b - 1, 1)
    red_pos = np.empty(b, dtype=np.int64)
    red_pos[red_order] = arange
    ill_pos = np.empty(b, dtype=np.int64)
    ill_pos[ill_order] = arange
    red = by_id(red)
    ill = by_id(ill)
    entries = [
        CandidateEntry(sid, Tag.REDUNDANT, score)
        for sid, score in zip(ids[red].tolist(), (1.0 - red_pos[red] / denom).tolist())
    ]
    entries.extend(
        CandidateEntry(sid, Tag.ILL_MATCHED, score)
        for sid, score in zip(ids[ill].tolist(), (1.0 - ill_pos[ill] / denom).tolist())
    )
    return entries


def accumulate(epoch_candidates, built_at_epoch: int = 0) -> CandidateSet:
    """Union of per-batch candidate lists; duplicate ids are a sampler bug."""
    entries = [e for batch_entries in epoch_candidates for e in batch_entries]
    ids = np.fromiter((e.sample_id for e in entries), dtype=np.int64, count=len(entries))
    uniq, counts = np.unique(ids, return_counts=True)
    if uniq.size != ids.size:
        raise PrunerError(f"sample {int(uniq[counts > 1][0])} appeared in two batches")
    return CandidateSet(entries=entries, built_at_epoch=built_at_epoch)


def sample_pruned(candidates: CandidateSet, rho_cur: float, seed: int, epoch: int = 0) -> ActiveView:
    """Uniform draw of round(rho_cur * |candidates|) ids to exclude."""
    if not (0.0 <= rho_cur <= 1.0):
        raise PrunerError("rho_cur must lie in [0, 1]")
    entries = candidates.entries
    ids = np.sort(np.fromiter((e.sample_id for e in entries), dtype=np.int64, count=len(entries)))
    size = round(rho_cur * ids.size)
    rng = np.random.Generator(np.random.PCG64(seed))
    if size == 0 or ids.size == 0:
        chosen: list[int] = []
    else:
        chosen = rng.choice(ids, size=size, replace=False).tolist()
    return ActiveView(excluded=frozenset(chosen), epoch=epoch)


def active_indices(n: int, view: ActiveView) -> list[int]:
    """Sorted ids of samples that remain in play."""
    if not view.excluded:
        return list(range(n))
    excluded = np.fromiter(view.excluded, dtype=np.int64, count=len(view.excluded))
    if excluded.min() < 0 or excluded.max() >= n:
        bad = excluded[(excluded < 0) | (excluded >= n)][0]
        raise PrunerError(f"excluded id {int(bad)} out of range for n={n}")
    keep = np.ones(n, dtype=bool)
    keep[excluded] = False
    return np.nonzero(keep)[0].tolist()
