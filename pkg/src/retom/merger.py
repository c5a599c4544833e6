"""Merge plans, weighted merging of sources into destinations, and unmerging."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .numerics import as_tokens
from .selector import RepSelection, compute_r, select_sources
from .windows import WindowPartition


@dataclass(frozen=True)
class MergeConfig:
    ratio: float = 0.5
    alpha: float = 0.5
    period: int = 1

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValidationError(f"ratio must lie in [0, 1], got {self.ratio}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if int(self.period) != self.period or self.period < 1:
            raise ValidationError(f"period must be an integer >= 1, got {self.period}")


@dataclass(frozen=True)
class PlanEntry:
    window_id: int
    dest: int
    sources: np.ndarray

    @property
    def r(self) -> int:
        return int(self.sources.size)


@dataclass(frozen=True)
class MergePlan:
    """Reduction bookkeeping for one token matrix.

    ``survivors`` lists kept old indices in ascending order, so
    ``survivor_map[old] = new`` is order preserving (-1 for merged-away
    sources). ``gather`` maps every old index to the reduced row it reads
    after unmerging.
    """

    n_tokens: int
    entries: tuple
    survivors: np.ndarray
    survivor_map: np.ndarray
    gather: np.ndarray
    # flattened view of entries with r >= 1, used by merge_tokens
    _dest: np.ndarray
    _src: np.ndarray
    _src_starts: np.ndarray
    _src_counts: np.ndarray

    @property
    def merged_count(self) -> int:
        return int(self.survivors.size)

    @property
    def total_r(self) -> int:
        return int(sum(e.r for e in self.entries))


def build_merge_plan(
    partition: WindowPartition,
    selections: Sequence[Optional[RepSelection]],
    ratio: float,
) -> MergePlan:
    """Combine per-window selections into one plan.

    ``selections`` is aligned with ``partition.windows``; entries for
    single-token windows are None.
    """
    if len(selections) != len(partition.windows):
        raise ValidationError(f"{len(selections)} selections for {len(partition.windows)} windows")
    n = partition.grid.n_tokens
    entries: List[PlanEntry] = []
    for wid, (window, sel) in enumerate(zip(partition.windows, selections)):
        if window.size < 2:
            if sel is not None:
                raise ValidationError(f"window {wid} has one token but a selection was given")
            continue
        if sel is None:
            raise ValidationError(f"window {wid} has no selection")
        if not sel.same_window(window):
            raise ValidationError(f"selection for window {wid} was made on a different index set")
        r = compute_r(window.size, ratio)
        entries.append(PlanEntry(window_id=wid, dest=sel.dest, sources=select_sources(sel, r)))

    merged = [e for e in entries if e.r > 0]
    is_source = np.zeros(n, dtype=bool)
    owner = np.arange(n, dtype=np.int64)
    for e in merged:
        is_source[e.sources] = True
        owner[e.sources] = e.dest
    survivors = np.flatnonzero(~is_source)
    survivor_map = np.full(n, -1, dtype=np.int64)
    survivor_map[survivors] = np.arange(survivors.size, dtype=np.int64)
    gather = survivor_map[owner]

    counts = np.array([e.r for e in merged], dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64) if merged else np.zeros(0, np.int64)
    src = np.concatenate([e.sources for e in merged]) if merged else np.zeros(0, np.int64)
    dest = np.array([e.dest for e in merged], dtype=np.int64)
    return MergePlan(
        n_tokens=n,
        entries=tuple(entries),
        survivors=survivors,
        survivor_map=survivor_map,
        gather=gather,
        _dest=dest,
        _src=src,
        _src_starts=starts,
        _src_counts=counts,
    )


def merge_tokens(tokens, plan: MergePlan, alpha: float) -> np.ndarray:
    """Reduce ``tokens`` to ``plan.merged_count`` rows.

    Each destination row becomes ``alpha * D + (1 - alpha) * mean(sources)``;
    every other surviving row is copied unchanged.
    """
    x = as_tokens(tokens)
    if x.shape[0] != plan.n_tokens:
        raise ValidationError(f"plan built for {plan.n_tokens} tokens, got {x.shape[0]}")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    out = x[plan.survivors]
    if plan._dest.size:
        src_mean = np.add.reduceat(x[plan._src], plan._src_starts, axis=0) / plan._src_counts[:, None]
        out[plan.survivor_map[plan._dest]] = alpha * x[plan._dest] + (1.0 - alpha) * src_mean
    return out


def unmerge_tokens(merged, plan: MergePlan) -> np.ndarray:
    """Restore full length: survivors return home, sources copy their destination row."""
    m = as_tokens(merged)
    if m.shape[0] != plan.merged_count:
        raise ValidationError(f"expected {plan.merged_count} merged rows, got {m.shape[0]}")
    return m[plan.gather]
