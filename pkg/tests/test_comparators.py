import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_dataset
from oracles import entropy_primal_newton, irls_logistic
from itrbal.comparators import (ConvergenceError, SeparationError, classical_weights, entropy_balancing,
                                entropy_weights, estimated_weights, fit_logistic, oracle_weights)
from itrbal.data import normalize_groups
from itrbal.simulation import ScenarioConfig, generate


def _grad(X, y, beta, ridge, sw=None):
    Z = np.column_stack([np.ones(len(y)), X])
    sw = np.ones(len(y)) if sw is None else sw
    p = 1 / (1 + np.exp(-Z @ beta))
    pen = np.r_[0.0, np.full(Z.shape[1] - 1, ridge)]
    return Z.T @ (sw * (p - y)) + pen * beta


def test_logistic_symmetric_case():
    beta = fit_logistic(np.zeros((6, 1)), np.array([0, 1, 0, 1, 0, 1.0]))
    np.testing.assert_allclose(beta, 0, atol=1e-12)


def test_logistic_ridge_handles_separation():
    x = np.linspace(-1, 1, 20)
    y = (x > 0).astype(float)
    beta = fit_logistic(x[:, None], y, ridge=0.1)
    assert np.all(np.isfinite(beta))
    assert np.abs(_grad(x[:, None], y, beta, 0.1)).max() <= 1e-8
    with pytest.raises(SeparationError, match="ridge"):
        fit_logistic(x[:, None], y, ridge=0.0)


def test_logistic_needs_both_labels():
    with pytest.raises(ValueError):
        fit_logistic(np.zeros((3, 1)), np.ones(3))


def test_logistic_matches_irls_six_points():
    X = np.array([[-1, 0.5], [-0.5, -1], [0, 0.3], [0.5, 1], [1, -0.4], [1.5, 0.2]])
    y = np.array([0, 1, 0, 1, 0, 1.0])
    beta = fit_logistic(X, y)
    assert np.abs(beta - irls_logistic(X, y)).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), ridge=st.sampled_from([0.0, 1e-6, 1e-2, 1.0]))
def test_logistic_matches_irls_weighted(seed, ridge):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 3))
    y = (rng.uniform(size=60) < 1 / (1 + np.exp(-X @ [1.0, -0.5, 0.2]))).astype(float)
    sw = rng.uniform(0.1, 3.0, 60)
    beta = fit_logistic(X, y, sample_weight=sw, ridge=ridge)
    assert np.abs(_grad(X, y, beta, ridge, sw)).max() <= 1e-8
    assert np.abs(beta - irls_logistic(X, y, sw, ridge)).max() <= 1e-10


def test_classical_constant_probabilities(small_data):
    d = small_data
    half = np.full(d.n_s, 0.5)
    uni = normalize_groups(np.ones(d.n_s), d.A)
    np.testing.assert_allclose(classical_weights(d, "overlap", half).w, uni, rtol=1e-14)
    np.testing.assert_allclose(classical_weights(d, "importance", half, half).w, uni, rtol=1e-14)
    np.testing.assert_allclose(classical_weights(d, "ipw", half).w, uni, rtol=1e-14)


def test_classical_formulas_and_clipping(small_data):
    d = small_data
    rng = np.random.default_rng(1)
    pi, rho = rng.uniform(0.1, 0.9, d.n_s), rng.uniform(0.1, 0.9, d.n_s)
    raw = np.where(d.A == 1, 1 / pi, 1 / (1 - pi)) * (1 - rho) / rho
    np.testing.assert_allclose(classical_weights(d, "importance", pi, rho).w,
                               normalize_groups(raw, d.A), rtol=1e-12)
    pi[0] = 0.0
    ws = classical_weights(d, "ipw", pi)
    assert ws.info["clipped"] == 1 and np.all(np.isfinite(ws.w))
    with pytest.raises(ValueError):
        classical_weights(d, "ipw", np.full(d.n_s, 1.5))
    with pytest.raises(ValueError):
        classical_weights(d, "importance", pi)


def test_oracle_importance_equals_formula():
    d, orc = generate(ScenarioConfig("nonlinear", 0.4, n=400, seed=5))
    Xs = d.X_source
    pi, rho = orc.pi(Xs), orc.rho(Xs)
    via_classical = classical_weights(d, "importance", pi, rho).w
    wstar = np.where(d.A == 1, 1 / pi, 1 / (1 - pi)) * (1 - rho) / rho
    np.testing.assert_allclose(via_classical, normalize_groups(wstar, d.A), rtol=1e-12, atol=0)
    np.testing.assert_allclose(oracle_weights(d, "importance", orc).w, normalize_groups(wstar, d.A),
                               rtol=1e-12, atol=0)
    wdag = np.where(d.A == 1, 1 - pi, pi)
    np.testing.assert_allclose(oracle_weights(d, "overlap", orc).w, normalize_groups(wdag, d.A),
                               rtol=1e-12, atol=0)


def test_estimated_weights_invariants(small_data):
    for kind in ("ipw", "importance", "overlap"):
        estimated_weights(small_data, kind).check(small_data)


def test_ebal_uniform_when_balanced():
    C = np.array([[-1.0], [0.0], [1.0], [2.0]])
    w = entropy_weights(C, C.mean(axis=0))
    np.testing.assert_allclose(w, 0.25, atol=1e-12)


def test_ebal_matches_projected_gradient():
    c = np.array([0.1, -0.8, 1.3, 0.4, -0.2])
    w = entropy_weights(c[:, None], np.array([0.45]), tol=1e-12)
    ref = entropy_primal_newton(c, 0.45)
    assert np.abs(w - ref).max() <= 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_ebal_constraints_and_monotone_dual(seed):
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(40, 3))
    target = 0.3 * rng.normal(size=3)
    w, trace = entropy_weights(C, target, return_trace=True)
    assert abs(w.sum() - 1) <= 1e-12 and np.all(w > 0)
    assert np.abs(C.T @ w - target).max() <= 1e-8
    assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))


def test_ebal_infeasible_raises():
    C = np.array([[0.0], [1.0], [2.0]])
    with pytest.raises(ConvergenceError, match="violation"):
        entropy_weights(C, np.array([5.0]))


@pytest.mark.parametrize("target,squares", [("target_moments", False), ("source_moments", False),
                                            ("target_moments", True)])
def test_entropy_balancing_dataset(target, squares):
    d = random_dataset(np.random.default_rng(3), 80, 50, 2, shift=0.3)
    ws = entropy_balancing(d, target, squares=squares)
    ws.check(d)
    ref = (d.X_target if target == "target_moments" else d.X_source).mean(axis=0)
    for a in (0, 1):
        m = d.A == a
        got = ws.w[m] @ d.X_source[m] / ws.w[m].sum()
        np.testing.assert_allclose(got, ref, atol=1e-8)
