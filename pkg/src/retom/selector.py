"""Representative (destination) token choice and source ranking per window."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .numerics import argsort_ascending, argsort_descending, as_tokens, check_indices, cosine_block, row_mean_excluding_self

DESTINATION_MODES = ("representative", "least", "random")


@dataclass(frozen=True)
class RepSelection:
    """Selection for one window.

    ``window`` holds the token indices in ascending order and ``avg_sims``
    is aligned with it. ``dest`` and ``ranked_rest`` are
    global token indices.
    """

    window_id: int
    window: np.ndarray
    dest: int
    ranked_rest: np.ndarray
    avg_sims: np.ndarray
    sim: Optional[np.ndarray] = None

    def avg_sim_of(self, token: int) -> float:
        pos = np.flatnonzero(self.window == token)
        if pos.size != 1:
            raise KeyError(token)
        return float(self.avg_sims[pos[0]])

    def same_window(self, window) -> bool:
        w = np.asarray(window, dtype=np.int64).reshape(-1)
        return w.shape == self.window.shape and bool(np.array_equal(np.sort(w), np.sort(self.window)))


def compute_r(window_size: int, ratio: float) -> int:
    """Number of source tokens merged away from a window of ``window_size`` tokens."""
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"ratio must lie in [0, 1], got {ratio}")
    if window_size < 1:
        raise ValidationError(f"window size must be >= 1, got {window_size}")
    r = math.floor(window_size * ratio)
    return min(r, window_size - 1)


def select_representative(
    tokens,
    window: Sequence[int],
    window_id: int = 0,
    destination: str = "representative",
    rng: Optional[np.random.Generator] = None,
    keep_matrix: bool = False,
) -> Optional[RepSelection]:
    """Pick the merge destination of ``window`` from average cosine similarity.

    Returns None for windows with fewer than two tokens; those are never merged.

    ``destination`` selects the ablation: ``"representative"`` takes the
    highest average similarity, ``"least"`` the lowest, ``"random"`` a token
    drawn from ``rng``. In every mode the remaining tokens are ranked by
    average similarity, high to low, ties to the smaller token index.
    """
    if destination not in DESTINATION_MODES:
        raise ValidationError(f"unknown destination mode {destination!r}")
    w = np.asarray(window, dtype=np.int64).reshape(-1)
    if w.size < 2:
        return None
    x = np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"token matrix must be 2-D, got shape {x.shape}")
    # ascending token order makes position ties resolve to the smaller token index
    w = np.sort(check_indices(w, x.shape[0]))
    sim = cosine_block(as_tokens(x[w]))
    avg = row_mean_excluding_self(sim)
    order = argsort_descending(avg)
    if destination == "representative":
        dest_pos = int(order[0])
    elif destination == "least":
        dest_pos = int(argsort_ascending(avg)[0])
    else:
        if rng is None:
            raise ValidationError("random destination mode needs an rng")
        dest_pos = int(rng.integers(w.size))
    rest = order[order != dest_pos]
    return RepSelection(
        window_id=window_id,
        window=w.copy(),
        dest=int(w[dest_pos]),
        ranked_rest=w[rest],
        avg_sims=avg,
        sim=sim if keep_matrix else None,
    )


def select_sources(selection: RepSelection, r: int) -> np.ndarray:
    """The first ``r`` tokens of ``selection.ranked_rest``."""
    if r < 0 or r > selection.ranked_rest.size:
        raise ValidationError(f"r={r} outside [0, {selection.ranked_rest.size}]")
    return selection.ranked_rest[:r].copy()
