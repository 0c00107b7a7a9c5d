import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_dataset
from oracles import krr_bordered
from itrbal.balance import GramCache
from itrbal.data import Dataset
from itrbal.kernel import KernelSpec, gram, pooled_spec
from itrbal.simulation import ScenarioConfig, generate
from itrbal.tuning import (KernelRidge, TuningConfig, cv_ridge, fit_outcome_regression, select_alpha,
                           select_lambda, subsample_masks)

FAST = dict(n_subsamples=10)


def test_config_validation():
    with pytest.raises(ValueError):
        TuningConfig(alpha_grid=())
    with pytest.raises(ValueError):
        TuningConfig(lambda_grid=(1.0, 0.1))
    with pytest.raises(ValueError):
        TuningConfig(subsample_fraction=1.0)
    with pytest.raises(ValueError):
        TuningConfig(alpha_grid=(0.0, 1.5))


def test_singleton_grids(small_data):
    d = small_data
    spec = pooled_spec(d.X)
    sel = select_lambda(d, spec, 0.5, TuningConfig(lambda_grid=(0.3,), **FAST))
    assert sel.lam == 0.3
    res = select_alpha(d, spec, TuningConfig(alpha_grid=(0.7,), lambda_grid=(0.1, 1.0), **FAST))
    assert res.alpha == 0.7 and res.lam in (0.1, 1.0)
    assert len(res.report) == 1


def test_duplicated_data_ties_to_smallest_lambda():
    pts = np.random.default_rng(2).normal(size=(15, 2))
    X = np.vstack([pts, pts, pts[:10]])
    S = np.r_[np.ones(30, int), np.zeros(10, int)]
    A = np.r_[np.ones(15, int), np.zeros(15, int)]
    d = Dataset(X=X, S=S, A=A, Y=np.zeros(30))
    spec = pooled_spec(X)
    cfg = TuningConfig(**FAST)
    for alpha in (0.0, 1.0):
        sel = select_lambda(d, spec, alpha, TuningConfig(alpha_grid=(alpha,), **FAST))
        if alpha == 0.0:
            # pure treated/control balance: uniform weights are optimal at every lambda
            np.testing.assert_allclose(sel.scores, sel.scores[0], rtol=1e-6)
            assert sel.lam == cfg.lambda_grid[0]
        assert np.all(sel.scores < 0.05)


def test_select_lambda_deterministic():
    d, _ = generate(ScenarioConfig("linear", 0.0, n=1600, seed=3))
    spec = pooled_spec(d.X)
    cfg = TuningConfig(seed=11, **FAST)
    a = select_lambda(d, spec, 0.5, cfg)
    b = select_lambda(d, spec, 0.5, cfg, cache=GramCache(d, spec))
    assert a.scores.tobytes() == b.scores.tobytes()
    assert a.lam == b.lam == cfg.lambda_grid[int(np.nanargmin(a.scores))]


def test_masks_depend_only_on_seed():
    cfg = TuningConfig(seed=4)
    m1, m2 = subsample_masks(100, cfg), subsample_masks(100, cfg)
    assert np.array_equal(m1, m2)
    assert m1.shape == (50, 100) and np.all(m1.sum(axis=1) == 80)
    assert not np.array_equal(m1, subsample_masks(100, TuningConfig(seed=5)))


def test_refit_flag_runs(small_data):
    d = small_data
    cfg = TuningConfig(lambda_grid=(0.1, 1.0), n_subsamples=3, refit_subsamples=True)
    sel = select_lambda(d, pooled_spec(d.X), 0.5, cfg)
    assert np.all(np.isfinite(sel.scores))


def test_krr_constant_outcome(rng):
    X = rng.normal(size=(25, 2))
    m = KernelRidge(KernelSpec(1.0), 0.1).fit(X, np.full(25, 3.5))
    np.testing.assert_allclose(m.predict(rng.normal(size=(10, 2))), 3.5, atol=1e-12)


def test_krr_interpolates_as_ridge_vanishes(rng):
    X = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    m = KernelRidge(KernelSpec(1.0), 1e-10).fit(X, y)
    np.testing.assert_allclose(m.predict(X), y, atol=1e-6)


def test_krr_matches_dense_oracle(rng):
    X = rng.normal(size=(10, 3))
    y = rng.normal(size=10)
    spec = KernelSpec(1.4)
    for ridge in (1e-3, 0.1, 1.0):
        m = KernelRidge(spec, ridge).fit(X, y)
        a, c = krr_bordered(gram(X, X, spec), y, ridge)
        assert np.abs(m.coef_ - a).max() <= 1e-10 and abs(m.intercept_ - c) <= 1e-10
        K = gram(X, X, spec)
        resid = (K + ridge * np.eye(10)) @ m.coef_ + m.intercept_ - y
        assert np.abs(resid).max() <= 1e-8 and abs(m.coef_.sum()) <= 1e-8


def test_cv_ridge_and_outcome_regression(small_data):
    d = small_data
    spec = pooled_spec(d.X)
    r = cv_ridge(d.X_source, d.Y, spec)
    assert r in (1e-3, 1e-2, 1e-1, 1.0)
    f = fit_outcome_regression(d, 1, spec)
    assert np.all(np.isfinite(f(d.X_target)))


def test_report_schema(small_data):
    d = small_data
    cfg = TuningConfig(alpha_grid=(0.0, 0.5, 1.0), lambda_grid=(0.1, 1.0), **FAST)
    res = select_alpha(d, pooled_spec(d.X), cfg)
    rows = res.report_rows()
    assert [r["alpha"] for r in rows] == [0.0, 0.5, 1.0]
    for r in rows:
        assert set(r) == {"alpha", "lambda", "value", "ess"}
        assert r["lambda"] in (0.1, 1.0) and 0 < r["ess"] <= 2 * d.n_s
    best = max(r["value"] for r in rows)
    assert res.alpha == max(r["alpha"] for r in rows if r["value"] == best)
    res.solution.check(d)


def test_select_alpha_deterministic():
    d, _ = generate(ScenarioConfig("nonlinear", 0.4, n=400, seed=9))
    spec = pooled_spec(d.X)
    cfg = TuningConfig(seed=2, **FAST)
    a, b = select_alpha(d, spec, cfg), select_alpha(d, spec, cfg)
    assert (a.alpha, a.lam) == (b.alpha, b.lam)
    assert a.solution.w.tobytes() == b.solution.w.tobytes()


@pytest.mark.slow
def test_oracle_regressors_prefer_target_balance_under_shift():
    hits = 0
    for seed in range(20):
        d, orc = generate(ScenarioConfig("linear", 0.4, n=1600, seed=seed))
        res = select_alpha(d, pooled_spec(d.X), TuningConfig(seed=seed, **FAST),
                           regressors=(orc.mu0, orc.mu1))
        hits += res.alpha > 0
    assert hits >= 14
