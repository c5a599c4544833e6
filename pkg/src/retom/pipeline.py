"""Toy iterative attention pipeline used to measure merging.

A fixed stack of residual self-attention layers with down / bottleneck / up
roles stands in for the transformer blocks of a denoising U-Net. A latent
token field drifts slowly across timesteps; at each timestep the stack runs
once on the current latent, either on all tokens (baseline) or on merged
tokens that are unmerged before the residual add.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .cache import SimilarityCache
from .errors import ValidationError
from .merger import MergeConfig, MergePlan, build_merge_plan, merge_tokens, unmerge_tokens
from .numerics import as_tokens, cosine_similarity_matrix
from .selector import DESTINATION_MODES, select_representative
from .windows import GridSpec, WindowPartition, check_role_sequence, partition

FIELD_CELL = 4
FIELD_NOISE = 0.3


@dataclass(frozen=True)
class ToyPipelineSpec:
    grid: GridSpec
    dim: int
    layers: tuple
    timesteps: int = 20
    drift_scale: float = 0.01
    seed: int = 0
    attention_sharpness: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")
        if self.timesteps < 1:
            raise ValidationError(f"timesteps must be >= 1, got {self.timesteps}")
        if not self.drift_scale >= 0:
            raise ValidationError(f"drift_scale must be >= 0, got {self.drift_scale}")
        if not self.attention_sharpness > 0:
            raise ValidationError(f"attention_sharpness must be > 0, got {self.attention_sharpness}")
        if not self.layers:
            raise ValidationError("pipeline needs at least one layer")
        check_role_sequence([layer.role for layer in self.layers])


@dataclass
class MetricsRecord:
    baseline_flops: int
    merged_flops: int
    flop_ratio: float
    wall_time_baseline_ns: Optional[int]
    wall_time_merged_ns: Optional[int]
    tokens_before: int
    tokens_after: int
    tokens_after_per_layer: List[int]
    cache_recomputes: int
    cache_hits: int
    output_mse_vs_baseline: float
    drift_correlations: List[float] = field(default_factory=list)

    TIMING_FIELDS = ("wall_time_baseline_ns", "wall_time_merged_ns")

    @property
    def speedup(self) -> Optional[float]:
        if not self.wall_time_baseline_ns or not self.wall_time_merged_ns:
            return None
        return self.wall_time_baseline_ns / self.wall_time_merged_ns


@dataclass(frozen=True)
class AttentionWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, sharpness: float = 1.0) -> "AttentionWeights":
        """Query and key share one random basis, so logits grow with token similarity.

        ``sharpness`` scales the logits; at 1 attention over a few hundred
        unit-norm tokens is close to uniform.
        """
        scale = 1.0 / math.sqrt(dim)
        basis = rng.standard_normal((dim, dim)) * scale * math.sqrt(sharpness)
        wv = rng.standard_normal((dim, dim)) * scale
        wo = rng.standard_normal((dim, dim)) * scale
        return cls(basis, basis.copy(), wv, wo)


def attention_block(tokens, weights: AttentionWeights, return_weights: bool = False):
    """Single-head ``softmax(Q K^T / sqrt(d)) V`` followed by the output projection."""
    x = as_tokens(tokens)
    if x.shape[1] != weights.dim:
        raise ValidationError(f"token width {x.shape[1]} does not match projection width {weights.dim}")
    q = x @ weights.wq
    k = x @ weights.wk
    v = x @ weights.wv
    logits = (q @ k.T) / math.sqrt(weights.dim)
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    out = (logits @ v) @ weights.wo
    if return_weights:
        return out, logits
    return out


def drift_step(tokens, eps: float, rng: np.random.Generator) -> np.ndarray:
    """``x + eps * noise`` with standard normal noise from ``rng``."""
    if not eps >= 0:
        raise ValidationError(f"drift scale must be >= 0, got {eps}")
    x = as_tokens(tokens)
    noise = rng.standard_normal(x.shape)
    return x + eps * noise


def flop_model(n_tokens: int, dim: int) -> int:
    """Multiply-accumulate count of one attention block.

    ``4 N d^2`` for the Q, K, V and output projections plus ``2 N^2 d`` for
    ``Q K^T`` and the weighted sum over V. Softmax is not counted.
    """
    if n_tokens < 1 or dim < 1:
        raise ValidationError(f"need n_tokens >= 1 and dim >= 1, got {n_tokens}, {dim}")
    n, d = int(n_tokens), int(dim)
    return 4 * n * d * d + 2 * n * n * d


def initial_field(grid: GridSpec, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm tokens: a bilinearly interpolated coarse Gaussian field plus per-token noise."""
    ch = grid.height // FIELD_CELL + 2
    cw = grid.width // FIELD_CELL + 2
    coarse = rng.standard_normal((ch, cw, dim))
    r = np.arange(grid.height) / FIELD_CELL
    c = np.arange(grid.width) / FIELD_CELL
    r0, c0 = r.astype(int), c.astype(int)
    fr, fc = (r - r0)[:, None, None], (c - c0)[None, :, None]
    top = coarse[r0][:, c0] * (1 - fc) + coarse[r0][:, c0 + 1] * fc
    bot = coarse[r0 + 1][:, c0] * (1 - fc) + coarse[r0 + 1][:, c0 + 1] * fc
    smooth = top * (1 - fr) + bot * fr
    x = smooth.reshape(grid.n_tokens, dim) + FIELD_NOISE * rng.standard_normal((grid.n_tokens, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


@dataclass
class Trajectory:
    """Raw result of one simulated mode."""

    outputs: np.ndarray  # final-timestep output of the layer stack
    final_latent: np.ndarray
    plans: List[Optional[MergePlan]]
    cache: Optional[SimilarityCache]
    selection_calls: int
    drift_correlations: List[float]


class _Stack:
    def __init__(self, spec: ToyPipelineSpec):
        rng_field, rng_weights, rng_drift, rng_select = _streams(spec.seed)
        self.spec = spec
        self.latent0 = initial_field(spec.grid, spec.dim, rng_field)
        self.weights = [AttentionWeights.random(spec.dim, rng_weights, spec.attention_sharpness) for _ in spec.layers]
        self.rng_drift = rng_drift
        self.rng_select = rng_select
        self.partitions: List[WindowPartition] = [partition(spec.grid, layer.window_side) for layer in spec.layers]

    def forward_baseline(self, x: np.ndarray) -> np.ndarray:
        h = x
        for w in self.weights:
            h = h + attention_block(h, w)
        return h

    def forward_planned(self, x: np.ndarray, plans: Sequence[MergePlan], alpha: float) -> np.ndarray:
        h = x
        for w, plan in zip(self.weights, plans):
            h = h + unmerge_tokens(attention_block(merge_tokens(h, plan, alpha), w), plan)
        return h


def simulate(
    spec: ToyPipelineSpec,
    config: MergeConfig,
    merged: bool = True,
    destination: str = "representative",
    use_cache: bool = True,
) -> Trajectory:
    """Run every timestep of one mode and return the final outputs.

    With ``use_cache=False`` selections are recomputed at every timestep
    without touching a cache object.
    """
    if destination not in DESTINATION_MODES:
        raise ValidationError(f"unknown destination mode {destination!r}")
    stack = _Stack(spec)
    cache = SimilarityCache(config.period) if (merged and use_cache) else None
    calls = 0
    x = stack.latent0
    ref_window = _reference_window(stack.partitions[0])
    prev_sim = None
    correlations: List[float] = []
    outputs = x
    plans: List[Optional[MergePlan]] = [None] * len(spec.layers)

    for t in range(spec.timesteps):
        if ref_window is not None:
            sim = cosine_similarity_matrix(x, ref_window)
            if prev_sim is not None:
                correlations.append(offdiag_correlation(prev_sim, sim))
            prev_sim = sim
        h = x
        for li, (layer, part, w) in enumerate(zip(spec.layers, stack.partitions, stack.weights)):
            if not merged:
                h = h + attention_block(h, w)
                continue
            selections = []
            for wid, window in enumerate(part.windows):
                if window.size < 2:
                    selections.append(None)
                    continue

                def compute(h=h, window=window, wid=wid):
                    return select_representative(h, window, wid, destination, stack.rng_select)

                if cache is None:
                    sel = compute()
                    calls += 1
                else:
                    sel = cache.get_or_compute(t, (layer.layer_id, wid), h, window, compute)
                selections.append(sel)
            plan = build_merge_plan(part, selections, config.ratio)
            plans[li] = plan
            h = h + unmerge_tokens(attention_block(merge_tokens(h, plan, config.alpha), w), plan)
        outputs = h
        if t + 1 < spec.timesteps:
            x = drift_step(x, spec.drift_scale, stack.rng_drift)

    if cache is not None:
        calls = cache.recomputes
    return Trajectory(outputs, x, plans, cache, calls, correlations)


def run(
    spec: ToyPipelineSpec,
    config: MergeConfig,
    mode: str = "merged",
    destination: str = "representative",
    use_cache: bool = True,
    timing_repeats: int = 5,
) -> MetricsRecord:
    """Simulate ``mode`` (and the baseline it is compared against) and collect metrics.

    Wall times are the median over ``timing_repeats`` forward passes on the
    final latent, after one warm-up; merged passes reuse the final plans, so
    only merge, attention and unmerge are timed. ``timing_repeats=0``
    disables timing and leaves those fields as None.
    """
    if mode not in ("baseline", "merged"):
        raise ValidationError(f"unknown mode {mode!r}")
    base = simulate(spec, config, merged=False)
    n, d, steps = spec.grid.n_tokens, spec.dim, spec.timesteps
    n_layers = len(spec.layers)
    baseline_flops = steps * n_layers * flop_model(n, d)

    if mode == "baseline":
        traj = base
        per_layer = [n] * n_layers
    else:
        traj = simulate(spec, config, merged=True, destination=destination, use_cache=use_cache)
        per_layer = [p.merged_count for p in traj.plans]
    merged_flops = steps * sum(flop_model(k, d) for k in per_layer)

    t_base = t_merged = None
    if timing_repeats > 0:
        stack = _Stack(spec)
        x = base.final_latent
        t_base = _median_ns(lambda: stack.forward_baseline(x), timing_repeats)
        if mode == "baseline":
            t_merged = t_base
        else:
            t_merged = _median_ns(lambda: stack.forward_planned(x, traj.plans, config.alpha), timing_repeats)

    return MetricsRecord(
        baseline_flops=baseline_flops,
        merged_flops=merged_flops,
        flop_ratio=merged_flops / baseline_flops,
        wall_time_baseline_ns=t_base,
        wall_time_merged_ns=t_merged,
        tokens_before=n * n_layers,
        tokens_after=sum(per_layer),
        tokens_after_per_layer=per_layer,
        cache_recomputes=traj.selection_calls,
        cache_hits=traj.cache.hits if traj.cache is not None else 0,
        output_mse_vs_baseline=float(np.mean((traj.outputs - base.outputs) ** 2)),
        drift_correlations=base.drift_correlations,
    )


def _median_ns(fn, repeats: int) -> int:
    fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    samples.sort()
    mid = len(samples) // 2
    if len(samples) % 2:
        return samples[mid]
    return (samples[mid - 1] + samples[mid]) // 2


def _reference_window(part: WindowPartition):
    for window in part.windows:
        if window.size >= 2:
            return window
    return None


def offdiag_correlation(a, b) -> float:
    """Pearson correlation of the off-diagonal entries of two square matrices.

    Equal inputs give exactly 1.0; a constant input against a different one
    gives 0.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("need two square matrices of equal shape")
    mask = ~np.eye(a.shape[0], dtype=bool)
    u, v = a[mask], b[mask]
    if u.size == 0:
        raise ValidationError("matrices have no off-diagonal entries")
    if np.array_equal(u, v):
        return 1.0
    du, dv = u - u.mean(), v - v.mean()
    su, sv = math.sqrt(float(du @ du)), math.sqrt(float(dv @ dv))
    if su == 0.0 or sv == 0.0:
        return 0.0
    return float(du @ dv) / (su * sv)


@dataclass
class DriftReport:
    window: np.ndarray
    timesteps: List[int]
    matrices: List[np.ndarray]
    correlations: List[float]  # between consecutive sampled timesteps


def similarity_drift_report(spec: ToyPipelineSpec, window, sample_timesteps: Sequence[int]) -> DriftReport:
    """Within-window similarity of the latent at each sampled timestep."""
    w = np.asarray(window, dtype=np.int64).reshape(-1)
    if w.size < 2:
        raise ValidationError("drift report needs a window of at least two tokens")
    wanted = sorted(set(int(t) for t in sample_timesteps))
    if not wanted:
        raise ValidationError("no sample timesteps given")
    if wanted[0] < 0 or wanted[-1] >= spec.timesteps:
        raise ValidationError(f"sample timesteps must lie in [0, {spec.timesteps})")
    rng_field, _, rng_drift, _ = _streams(spec.seed)
    x = initial_field(spec.grid, spec.dim, rng_field)
    matrices = []
    for t in range(wanted[-1] + 1):
        if t in wanted:
            matrices.append(cosine_similarity_matrix(x, w))
        x = drift_step(x, spec.drift_scale, rng_drift)
    correlations = [offdiag_correlation(a, b) for a, b in zip(matrices, matrices[1:])]
    return DriftReport(window=w, timesteps=wanted, matrices=matrices, correlations=correlations)
