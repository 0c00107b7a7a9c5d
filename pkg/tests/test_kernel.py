import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import gauss_k, median_pairs
from itrbal.kernel import KernelSpec, gram, median_heuristic, pooled_spec


def test_median_examples():
    assert median_heuristic(np.array([[0.0], [1.0], [3.0]])) == 2.0
    assert median_heuristic(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0


def test_median_matches_sort_oracle(rng):
    for _ in range(5):
        X = rng.normal(size=(20, 3))
        assert median_heuristic(X) == pytest.approx(median_pairs(X), rel=1e-14)


def test_median_degenerate():
    with pytest.raises(ValueError, match="degenerate covariates"):
        median_heuristic(np.ones((5, 2)))
    with pytest.raises(ValueError):
        median_heuristic(np.ones((1, 2)))


def test_median_mostly_ties_falls_back_to_positive():
    X = np.array([[0.0]] * 4 + [[1.0]])
    assert median_heuristic(X) == 1.0


def test_closed_form_entry():
    K = gram(np.array([[0.0, 0.0]]), np.array([[0.0, 2.0]]), KernelSpec(2.0))
    assert K[0, 0] == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert K[0, 0] == pytest.approx(0.606531, abs=1e-6)


def test_gram_matches_pointwise(rng):
    A, B = rng.normal(size=(7, 3)), rng.normal(size=(5, 3))
    K = gram(A, B, KernelSpec(1.3))
    for i in range(7):
        for j in range(5):
            assert K[i, j] == pytest.approx(gauss_k(A[i], B[j], 1.3), abs=1e-14)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        gram(np.zeros((2, 2)), np.zeros((2, 3)), KernelSpec(1.0))


def test_bad_spec():
    with pytest.raises(ValueError):
        KernelSpec(0.0)
    with pytest.raises(ValueError):
        KernelSpec(1.0, "matern")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 50), p=st.integers(1, 5))
def test_gram_symmetric_unit_diag_psd(seed, n, p):
    X = np.random.default_rng(seed).normal(size=(n, p))
    K = gram(X, X, pooled_spec(X))
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    assert np.all(np.abs(K) <= 1.0)
    assert np.linalg.eigvalsh(K).min() >= -1e-8


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), bw=st.floats(0.1, 10.0))
def test_scale_law(seed, bw):
    x, y = np.random.default_rng(seed).normal(size=(2, 1, 3))
    k2 = gram(x, y, KernelSpec(2 * bw))
    k1 = gram(x / 2, y / 2, KernelSpec(bw))
    np.testing.assert_allclose(k2, k1, rtol=1e-12)
