import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bisection_simplex, eq_qp_kkt
from itrbal.qp import (QpError, QpProblem, QpSettings, kkt_residuals, project_groups,
                       project_simplex, solve_qp)


def random_pd(rng, m, cond=10.0):
    U, _ = np.linalg.qr(rng.normal(size=(m, m)))
    ev = np.geomspace(1.0, cond, m)
    Q = (U * ev) @ U.T
    return 0.5 * (Q + Q.T)


def interior_instance(rng, m=12):
    """Random problem whose equality-only optimum is strictly positive."""
    groups = [np.arange(0, m // 2), np.arange(m // 2, m)]
    while True:
        Q = random_pd(rng, m)
        b = rng.uniform(0.5, 1.5, m) + 0.3 * rng.normal(size=m)
        w = eq_qp_kkt(Q, b, groups, float(m))
        if w.min() > 0.05:
            return QpProblem(Q, b, groups, float(m)), w


def test_identity_gives_uniform():
    n1, n0 = 3, 5
    n_s = n1 + n0
    p = QpProblem(np.eye(n_s), np.zeros(n_s), [np.arange(n1), np.arange(n1, n_s)], float(n_s))
    sol = solve_qp(p)
    np.testing.assert_allclose(sol.w[:n1], n_s / n1, atol=1e-9)
    np.testing.assert_allclose(sol.w[n1:], n_s / n0, atol=1e-9)


def test_two_variable_lagrange():
    p = QpProblem(np.diag([1.0, 2.0]), np.zeros(2), [np.arange(2)], 2.0)
    sol = solve_qp(p)
    np.testing.assert_allclose(sol.w, [4 / 3, 2 / 3], atol=1e-9)


def test_twelve_variable_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p, w_ref = interior_instance(rng)
        sol = solve_qp(p)
        assert np.abs(sol.w - w_ref).max() <= 1e-6


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 40))
def test_kkt_certificate(seed, m):
    rng = np.random.default_rng(seed)
    Q = random_pd(rng, m, cond=100.0)
    b = rng.normal(size=m)
    k = int(rng.integers(1, m)) if m > 1 else 1
    groups = [np.arange(k), np.arange(k, m)] if k < m else [np.arange(m)]
    p = QpProblem(Q, b, groups, float(m))
    sol = solve_qp(p)
    assert np.all(sol.w >= 0)
    for g in groups:
        assert abs(sol.w[g].sum() - m) <= 1e-7 * m
    # residuals on the caller's scale
    s = np.diag(Q).max()
    pr, dr, _ = kkt_residuals(Q / s, b / s, groups, float(m), sol.w)
    assert pr <= 1e-7 and dr <= 1e-7
    assert (pr, dr) == (sol.primal_residual, sol.dual_residual)
    # no feasible random point does better
    for _ in range(20):
        z = project_groups(rng.exponential(size=m) * m, groups, float(m))
        assert p.objective(sol.w) <= p.objective(z) + 1e-9


@settings(max_examples=100, deadline=None)
@given(v=st.lists(st.floats(-50, 50), min_size=1, max_size=30), r=st.floats(0.1, 100))
def test_projection_matches_bisection(v, r):
    v = np.array(v)
    w = project_simplex(v, r)
    assert np.all(w >= 0)
    assert abs(w.sum() - r) <= 1e-9 * max(1.0, r)
    np.testing.assert_allclose(w, bisection_simplex(v, r), atol=1e-9)


def test_permutation_invariance():
    rng = np.random.default_rng(11)
    m = 20
    Q, b = random_pd(rng, m, 50.0), rng.normal(size=m)
    groups = [np.arange(8), np.arange(8, m)]
    sol = solve_qp(QpProblem(Q, b, groups, float(m)))
    perm = rng.permutation(m)
    inv = np.argsort(perm)
    Qp, bp = Q[np.ix_(perm, perm)], b[perm]
    gp = [inv[g] for g in groups]
    solp = solve_qp(QpProblem(Qp, bp, gp, float(m)))
    np.testing.assert_allclose(solp.w[inv], sol.w, atol=1e-6)


def test_warm_start_fewer_iterations():
    rng = np.random.default_rng(5)
    wins = 0
    trials = 20
    for _ in range(trials):
        m = 40
        Q, b = random_pd(rng, m, 30.0), rng.normal(size=m)
        groups = [np.arange(20), np.arange(20, m)]
        base = solve_qp(QpProblem(Q, b, groups, float(m)), settings=QpSettings(polish=False))
        b2 = b + 1e-3 * rng.normal(size=m)
        p2 = QpProblem(Q, b2, groups, float(m))
        cold = solve_qp(p2, settings=QpSettings(polish=False))
        warm = solve_qp(p2, warm_start=base.w, warm_dual=base.dual, settings=QpSettings(polish=False))
        wins += warm.iterations <= cold.iterations
        np.testing.assert_allclose(warm.w, cold.w, atol=1e-5)
    assert wins >= 0.9 * trials


def test_empty_group_raises():
    with pytest.raises(QpError, match="empty"):
        QpProblem(np.eye(2), np.zeros(2), [np.arange(2), np.array([], dtype=int)], 2.0)


def test_validation():
    with pytest.raises(ValueError, match="symmetric"):
        QpProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2), [np.arange(2)], 2.0)
    with pytest.raises(ValueError, match="partition"):
        QpProblem(np.eye(3), np.zeros(3), [np.arange(2)], 2.0)


def test_iteration_cap_raises():
    rng = np.random.default_rng(2)
    m = 30
    Q, b = random_pd(rng, m, 1e4), 5 * rng.normal(size=m)
    with pytest.raises(QpError) as ei:
        solve_qp(QpProblem(Q, b, [np.arange(m)], float(m)),
                 settings=QpSettings(max_iter=1, polish=False, tol=1e-12))
    assert ei.value.iterations >= 1
