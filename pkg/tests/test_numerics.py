import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uirloss.numerics import (
    DegenerateInputError,
    DimensionError,
    as_mat,
    as_vec,
    cosine_distance,
    cosine_similarity_matrix,
    l2_normalize,
    l2_normalize_rows,
    log_softmax,
    logsumexp,
    softmax,
)

finite = st.floats(-700, 700, allow_nan=False)


def test_softmax_known_values():
    p = softmax(np.array([0.0, np.log(3.0)]))
    np.testing.assert_allclose(p, [0.25, 0.75], rtol=0, atol=1e-15)


def test_softmax_large_logits_do_not_overflow():
    p = softmax(np.array([1000.0, 1000.0, -1000.0]))
    np.testing.assert_allclose(p, [0.5, 0.5, 0.0], atol=1e-300)
    assert np.all(np.isfinite(p))


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_softmax_is_a_distribution(z):
    p = softmax(z)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-9


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50)),
       st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    np.testing.assert_allclose(softmax(z), softmax(z + c), atol=1e-12)


def test_logsumexp_matches_direct_sum():
    z = np.array([0.1, -2.0, 3.5])
    assert logsumexp(z) == pytest.approx(np.log(np.exp(z).sum()), rel=1e-14)


def test_log_softmax_consistent_with_softmax(rng):
    z = rng.normal(size=(4, 7)) * 5
    np.testing.assert_allclose(np.exp(log_softmax(z, axis=1)), softmax(z, axis=1), rtol=1e-12)


def test_l2_normalize():
    np.testing.assert_allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])
    rows = l2_normalize_rows(np.array([[3.0, 4.0], [0.0, 2.0]]))
    np.testing.assert_allclose(np.linalg.norm(rows, axis=1), 1.0)


def test_l2_normalize_zero_vector_raises():
    with pytest.raises(DegenerateInputError):
        l2_normalize(np.zeros(3))


def test_cosine_distance_basic_cases():
    assert cosine_distance([1.0, 0.0], [2.0, 0.0]) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance([1.0, 0.0], [0.0, 5.0]) == pytest.approx(1.0)
    assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0)


def test_cosine_distance_errors():
    with pytest.raises(DimensionError):
        cosine_distance([1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(DegenerateInputError):
        cosine_distance([0.0, 0.0], [1.0, 0.0])


@given(arrays(np.float64, 5, elements=st.floats(-10, 10)),
       arrays(np.float64, 5, elements=st.floats(-10, 10)))
def test_cosine_distance_range_and_symmetry(u, v):
    if np.linalg.norm(u) < 1e-6 or np.linalg.norm(v) < 1e-6:
        return
    d = cosine_distance(u, v)
    assert 0.0 <= d <= 2.0
    assert d == pytest.approx(cosine_distance(v, u), abs=1e-12)


def test_cosine_similarity_matrix(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(5, 4))
    sim = cosine_similarity_matrix(a, b)
    for i in range(3):
        for j in range(5):
            assert sim[i, j] == pytest.approx(1.0 - cosine_distance(a[i], b[j]), abs=1e-12)


def test_shape_and_finiteness_checks():
    with pytest.raises(DimensionError):
        as_vec(np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        as_mat(np.zeros(3))
    with pytest.raises(ValueError):
        as_vec([1.0, np.nan])


def test_softmax_reference_values():
    # e^z / sum e^z evaluated independently in extended precision
    np.testing.assert_allclose(softmax(np.array([1.0, 2.0, 3.0])),
                               [0.09003057317038046, 0.24472847105479764, 0.6652409557748219],
                               rtol=1e-14)
    np.testing.assert_allclose(softmax(np.array([7.5, 7.5, 7.5])), [1 / 3] * 3, rtol=1e-15)


def test_softmax_extreme_magnitudes(rng):
    for _ in range(1000):
        z = rng.uniform(-1e4, 1e4, size=int(rng.integers(2, 30)))
        p = softmax(z)
        assert np.all((p >= 0) & (p <= 1))
        assert abs(p.sum() - 1.0) < 1e-12


def test_softmax_empty_raises():
    with pytest.raises(DimensionError):
        softmax(np.array([]))


def test_unit_vector_is_fixed_point(rng):
    for _ in range(100):
        v = rng.normal(size=8)
        u = l2_normalize(v)
        assert abs(np.linalg.norm(u) - 1.0) < 1e-12
        np.testing.assert_allclose(l2_normalize(u), u, atol=1e-15)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_cosine_distance_scale_invariant(a, b):
    u = np.array([0.3, -1.2, 2.0])
    v = np.array([1.0, 0.5, -0.25])
    assert cosine_distance(a * u, b * v) == pytest.approx(cosine_distance(u, v), abs=1e-12)
