import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from retom.errors import DegenerateWindowError, ValidationError
from retom.numerics import argsort_descending, cosine_similarity_matrix, row_mean_excluding_self
from retom.oracles import oracle_cosine, oracle_sort_desc

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
token_mats = st.integers(1, 10).flatmap(
    lambda n: st.integers(1, 6).flatmap(lambda d: arrays(np.float64, (n, d), elements=finite))
)


def test_identical_tokens_all_ones():
    x = np.tile([0.3, -1.2, 2.0], (3, 1))
    np.testing.assert_array_equal(cosine_similarity_matrix(x, [0, 1, 2]), np.ones((3, 3)))


def test_orthogonal_tokens():
    s = cosine_similarity_matrix(np.eye(2), [0, 1])
    np.testing.assert_array_equal(s, [[1.0, 0.0], [0.0, 1.0]])


def test_matches_scalar_oracle():
    x = np.random.default_rng(7).uniform(-1, 1, size=(4, 3))
    got = cosine_similarity_matrix(x, [0, 1, 2, 3])
    assert np.max(np.abs(got - np.array(oracle_cosine(x, [0, 1, 2, 3])))) <= 1e-12


def test_index_subset_and_order():
    x = np.random.default_rng(8).normal(size=(10, 4))
    idx = [7, 2, 5]
    np.testing.assert_allclose(cosine_similarity_matrix(x, idx), oracle_cosine(x, idx), atol=1e-12)


def test_zero_norm_token_is_dissimilar_to_everything():
    x = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    s = cosine_similarity_matrix(x, [0, 1, 2])
    assert s[1].tolist() == [0.0, 0.0, 0.0]
    assert s[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert s[0, 0] == 1.0


@pytest.mark.parametrize(
    "indices, exc",
    [([0, 5], IndexError), ([-1], IndexError), ([0, 0], ValidationError), ([], ValidationError)],
)
def test_bad_indices(indices, exc):
    with pytest.raises(exc):
        cosine_similarity_matrix(np.ones((3, 2)), indices)


def test_non_finite_rejected():
    x = np.ones((2, 2))
    x[1, 0] = np.nan
    with pytest.raises(ValidationError):
        cosine_similarity_matrix(x, [0, 1])


@given(token_mats)
@settings(max_examples=200, deadline=None)
def test_symmetry_and_range(x):
    s = cosine_similarity_matrix(x)
    assert np.array_equal(s, s.T)
    assert np.all(s >= -1 - 1e-9) and np.all(s <= 1 + 1e-9)


@given(token_mats, st.data())
@settings(max_examples=200, deadline=None)
def test_scale_invariance_per_token(x, data):
    norms = np.linalg.norm(x, axis=1)
    row = data.draw(st.integers(0, x.shape[0] - 1))
    c = data.draw(st.sampled_from([1e-3, 0.5, 3.0, 1e3]))
    # scaling must not push a token across the zero-norm threshold
    if norms[row] * min(c, 1.0) < 1e-9:
        return
    y = x.copy()
    y[row] *= c
    assert np.max(np.abs(cosine_similarity_matrix(x) - cosine_similarity_matrix(y))) <= 1e-9


def test_repeatable_bit_exact():
    x = np.random.default_rng(3).normal(size=(32, 8))
    a = cosine_similarity_matrix(x)
    b = cosine_similarity_matrix(x.copy())
    assert a.tobytes() == b.tobytes()


def test_row_mean_examples():
    assert row_mean_excluding_self(np.ones((3, 3))).tolist() == [1.0, 1.0, 1.0]
    assert row_mean_excluding_self([[1.0, 0.5], [0.5, 1.0]]).tolist() == [0.5, 0.5]


def test_row_mean_matches_loop():
    a = np.random.default_rng(11).uniform(-1, 1, size=(5, 5))
    s = (a + a.T) / 2
    expected = [sum(s[i][j] for j in range(5) if j != i) / 4 for i in range(5)]
    assert np.max(np.abs(row_mean_excluding_self(s) - expected)) <= 1e-12


def test_row_mean_degenerate():
    with pytest.raises(DegenerateWindowError):
        row_mean_excluding_self([[1.0]])


def test_argsort_examples():
    assert argsort_descending([0.2, 0.9, 0.5]).tolist() == [1, 2, 0]
    assert argsort_descending([0.7, 0.7, 0.7]).tolist() == [0, 1, 2]
    assert argsort_descending([0.0, -0.0, 0.0]).tolist() == [0, 1, 2]


def test_argsort_matches_reference_sort():
    v = np.random.default_rng(5).random(100)
    v[10] = v[20] = v[30]  # force a few ties
    expected = sorted(range(100), key=lambda i: (-v[i], i))
    assert argsort_descending(v).tolist() == expected
    assert oracle_sort_desc(list(v)) == expected


def test_argsort_rejects_nan():
    with pytest.raises(ValidationError):
        argsort_descending([1.0, float("nan")])
