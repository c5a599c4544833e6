import math

import numpy as np
import pytest

from retom.errors import ValidationError
from retom.merger import MergeConfig
from retom.oracles import oracle_attention
from retom.pipeline import (
    AttentionWeights,
    ToyPipelineSpec,
    attention_block,
    drift_step,
    flop_model,
    initial_field,
    offdiag_correlation,
    run,
    similarity_drift_report,
    simulate,
)
from retom.windows import GridSpec, LayerSpec, adaptive_schedule

ROLES = ["down", "down", "bottleneck", "up", "up"]


def small_spec(sides=None, **kw):
    sides = sides or adaptive_schedule(ROLES, 2, 4)
    layers = [LayerSpec(i, r, s) for i, (r, s) in enumerate(zip(ROLES, sides))]
    kw.setdefault("timesteps", 6)
    return ToyPipelineSpec(GridSpec(8, 8), 8, layers, **kw)


@pytest.fixture
def weights():
    return AttentionWeights.random(4, np.random.default_rng(0), sharpness=3.0)


def test_attention_single_token(weights):
    x = np.array([[0.3, -1.0, 2.0, 0.5]])
    np.testing.assert_allclose(attention_block(x, weights), x @ weights.wv @ weights.wo, rtol=0, atol=1e-14)


def test_attention_identical_tokens(weights):
    x = np.tile([0.1, 0.2, -0.3, 0.4], (2, 1))
    out = attention_block(x, weights)
    assert np.array_equal(out[0], out[1])


def test_attention_matches_scalar_oracle(weights):
    x = np.random.default_rng(1).normal(size=(8, 4))
    got = attention_block(x, weights)
    expected = oracle_attention(x, weights.wq, weights.wk, weights.wv, weights.wo)
    assert np.max(np.abs(got - np.array(expected))) <= 1e-9


def test_attention_rows_normalized(weights):
    x = np.random.default_rng(2).normal(size=(50, 4)) * 3
    _, attn = attention_block(x, weights, return_weights=True)
    assert np.max(np.abs(attn.sum(axis=1) - 1.0)) <= 1e-9
    assert np.all(attn >= 0)


def test_attention_dim_mismatch(weights):
    with pytest.raises(ValidationError):
        attention_block(np.ones((3, 5)), weights)


def test_drift_zero_is_identity():
    x = np.random.default_rng(3).normal(size=(10, 4))
    assert np.array_equal(drift_step(x, 0.0, np.random.default_rng(0)), x)


def test_drift_displacement_statistics():
    d = 16
    x = np.random.default_rng(4).normal(size=(1000, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    disp = np.linalg.norm(drift_step(x, 0.01, np.random.default_rng(5)) - x, axis=1)
    # norm of a standard normal d-vector follows a chi distribution
    chi_mean = math.sqrt(2) * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))
    chi_sd = math.sqrt(d - chi_mean**2)
    assert abs(disp.mean() - 0.01 * chi_mean) <= 3 * 0.01 * chi_sd / math.sqrt(1000)
    assert abs(disp.mean() / (0.01 * math.sqrt(d)) - 1) < 0.02


def test_drift_deterministic():
    x = np.random.default_rng(6).normal(size=(10, 4))
    a = drift_step(x, 0.1, np.random.default_rng(7))
    b = drift_step(x, 0.1, np.random.default_rng(7))
    assert a.tobytes() == b.tobytes()


def test_flop_model():
    assert flop_model(1, 1) == 6
    assert flop_model(4096, 64) == 4 * 4096 * 64 * 64 + 2 * 4096 * 4096 * 64
    quad = lambda n: flop_model(n, 32) - 4 * n * 32 * 32
    assert quad(2000) == 4 * quad(1000)


def test_initial_field_unit_norm():
    x = initial_field(GridSpec(6, 5), 7, np.random.default_rng(0))
    assert x.shape == (30, 7)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_spec_validation():
    with pytest.raises(ValidationError):
        small_spec(timesteps=0)
    with pytest.raises(ValidationError):
        ToyPipelineSpec(GridSpec(4, 4), 4, [LayerSpec(0, "up", 2), LayerSpec(1, "down", 2)])


def test_zero_ratio_is_baseline():
    spec = small_spec()
    base = simulate(spec, MergeConfig(0.0, 0.5, 3), merged=False)
    merged = simulate(spec, MergeConfig(0.0, 0.5, 3), merged=True)
    assert base.outputs.tobytes() == merged.outputs.tobytes()
    m = run(spec, MergeConfig(0.0, 0.5, 3), timing_repeats=0)
    assert m.flop_ratio == 1.0 and m.output_mse_vs_baseline == 0.0


def test_period_one_equals_no_cache():
    spec = small_spec()
    cfg = MergeConfig(0.5, 0.5, 1)
    a = simulate(spec, cfg, use_cache=True)
    b = simulate(spec, cfg, use_cache=False)
    assert a.outputs.tobytes() == b.outputs.tobytes()
    assert a.selection_calls == b.selection_calls


def test_random_destination_period_one_equals_no_cache():
    spec = small_spec()
    cfg = MergeConfig(0.5, 0.5, 1)
    a = simulate(spec, cfg, destination="random", use_cache=True)
    b = simulate(spec, cfg, destination="random", use_cache=False)
    assert a.outputs.tobytes() == b.outputs.tobytes()


def test_caching_changes_output_but_not_shape():
    spec = small_spec(drift_scale=0.3)
    a = simulate(spec, MergeConfig(0.5, 0.5, 1))
    b = simulate(spec, MergeConfig(0.5, 0.5, 3))
    assert a.outputs.shape == b.outputs.shape == (64, 8)
    assert b.cache.hits > 0


def test_run_metrics_shape_and_determinism():
    spec = small_spec()
    cfg = MergeConfig(0.5, 0.5, 2)
    m1 = run(spec, cfg, timing_repeats=1)
    m2 = run(spec, cfg, timing_repeats=1)
    for name in vars(m1):
        if name not in m1.TIMING_FIELDS:
            assert getattr(m1, name) == getattr(m2, name), name
    assert 0 < m1.flop_ratio <= 1
    assert m1.tokens_after <= m1.tokens_before
    assert m1.wall_time_baseline_ns > 0 and m1.wall_time_merged_ns > 0
    assert len(m1.drift_correlations) == spec.timesteps - 1
    # 3 steps recompute (t=0,2,4) for every window of size >= 2
    windows = sum(len(range(0, 8, s)) ** 2 for s in adaptive_schedule(ROLES, 2, 4))
    assert m1.cache_recomputes == 3 * windows


def test_flop_ratio_monotone_in_ratio():
    spec = small_spec(timesteps=2)
    ratios = [run(spec, MergeConfig(r, 0.5, 1), timing_repeats=0).flop_ratio for r in np.linspace(0, 1, 9)]
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))


def test_flop_ratio_single_window():
    layers = [LayerSpec(0, "bottleneck", 8)]
    spec = ToyPipelineSpec(GridSpec(8, 8), 4, layers, timesteps=1)
    m = run(spec, MergeConfig(0.75, 0.5, 1), timing_repeats=0)
    assert m.tokens_after == 64 - 48
    assert m.flop_ratio == flop_model(16, 4) / flop_model(64, 4)


def test_baseline_mode_record():
    m = run(small_spec(timesteps=2), MergeConfig(0.5, 0.5, 1), mode="baseline", timing_repeats=0)
    assert m.flop_ratio == 1.0 and m.output_mse_vs_baseline == 0.0 and m.wall_time_merged_ns is None


def test_offdiag_correlation():
    a = np.array([[1, 0.2, 0.5], [0.2, 1, -0.1], [0.5, -0.1, 1]])
    assert offdiag_correlation(a, a) == pytest.approx(1.0, abs=1e-15)
    assert offdiag_correlation(a, -a) == pytest.approx(-1.0, abs=1e-15)
    flat = np.ones((3, 3))
    assert offdiag_correlation(flat, flat) == 1.0
    assert offdiag_correlation(flat, a) == 0.0


def test_drift_report_static_field():
    spec = small_spec(drift_scale=0.0, timesteps=10)
    rep = similarity_drift_report(spec, range(16), [0, 3, 9])
    assert all(np.array_equal(rep.matrices[0], m) for m in rep.matrices)
    assert rep.correlations == [1.0, 1.0]


def test_drift_report_large_noise_decorrelates():
    layers = [LayerSpec(0, "bottleneck", 8)]
    spec = ToyPipelineSpec(GridSpec(8, 8), 8, layers, timesteps=401, drift_scale=10.0, seed=1)
    rep = similarity_drift_report(spec, range(64), [0, 400])
    assert abs(rep.correlations[0]) < 0.2


def test_drift_report_errors():
    spec = small_spec()
    with pytest.raises(ValidationError):
        similarity_drift_report(spec, [3], [0])
    with pytest.raises(ValidationError):
        similarity_drift_report(spec, range(4), [0, spec.timesteps])
