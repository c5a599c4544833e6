"""Dense kernels shared by the selector and the drift report.

Tokens are plain ``(n_tokens, dim)`` float64 arrays. All functions are pure.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DegenerateWindowError, ValidationError

EPS_NORM = 1e-12


def as_tokens(tokens) -> np.ndarray:
    """Validate and return a 2-D finite float64 token matrix."""
    x = np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValidationError(f"token matrix must be (n_tokens, dim) with both >= 1, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("token matrix contains non-finite values")
    return x


def check_indices(indices: Sequence[int], n_tokens: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ValidationError("index list is empty")
    if idx.min() < 0 or idx.max() >= n_tokens:
        raise IndexError(f"token index out of range [0, {n_tokens})")
    if np.unique(idx).size != idx.size:
        raise ValidationError("index list contains duplicates")
    return idx


def cosine_similarity_matrix(tokens, indices: Sequence[int] | None = None) -> np.ndarray:
    """Pairwise cosine similarity of the selected rows.

    Rows with norm below ``EPS_NORM`` get similarity 0 with everything,
    including themselves. The upper triangle is mirrored so the result is
    exactly symmetric.
    """
    x = as_tokens(tokens)
    if indices is None:
        idx = np.arange(x.shape[0])
    else:
        idx = check_indices(indices, x.shape[0])
    return cosine_block(x[idx])


def cosine_block(sub: np.ndarray) -> np.ndarray:
    """Cosine similarity among all rows of an already validated array."""
    norms = np.linalg.norm(sub, axis=1)
    live = norms >= EPS_NORM
    # per-row max-abs scaling keeps the Gram entries away from overflow;
    # identical rows stay identical, so their similarity is exactly 1
    peak = np.abs(sub).max(axis=1)
    scaled = np.zeros_like(sub)
    scaled[live] = sub[live] / peak[live, None]
    gram = scaled @ scaled.T
    diag = np.diag(gram).copy()
    denom = np.sqrt(np.outer(diag, diag))
    sim = np.zeros_like(gram)
    both = np.outer(live, live)
    sim[both] = gram[both] / denom[both]
    upper = np.triu(sim, 1)
    sim = upper + upper.T
    sim[np.diag_indices_from(sim)] = live.astype(np.float64)
    return sim


def row_mean_excluding_self(sim) -> np.ndarray:
    """Mean of each row of ``sim`` over the off-diagonal entries."""
    s = np.asarray(sim, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValidationError(f"similarity matrix must be square, got shape {s.shape}")
    n = s.shape[0]
    if n < 2:
        raise DegenerateWindowError("average similarity needs at least two tokens")
    off = s.copy()
    off[np.diag_indices(n)] = 0.0
    return off.sum(axis=1) / (n - 1)


def argsort_descending(values) -> np.ndarray:
    """Indices sorting ``values`` high to low; equal values keep index order."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot sort non-finite values")
    # negation maps 0.0 to -0.0, which compares equal, so stability still holds
    return np.argsort(-v, kind="stable")


def argsort_ascending(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot sort non-finite values")
    return np.argsort(v, kind="stable")
