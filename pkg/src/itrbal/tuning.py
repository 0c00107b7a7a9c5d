"""Grid search for the balancing hyperparameters.

For every alpha, lambda is chosen by the mean treated-vs-control squared
MMD of the fitted weights over random source subsamples. Alpha is then
chosen by the plug-in target value of the rule learned under
``(alpha, lambda_alpha)``, with potential outcomes imputed by per-arm
kernel ridge regressions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .balance import BalanceHyperparams, GramCache, solve_balancing_weights
from .data import Dataset, LinearRule, WeightSolution
from .itr import DEFAULT_RULE_RIDGE, learn_linear_rule
from .kernel import KernelSpec, gram
from .qp import QpError, QpSettings

log = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))
DEFAULT_LAMBDA_GRID = tuple(10.0 ** np.linspace(-3.0, 2.0, 11))
KRR_RIDGE_GRID = (1e-3, 1e-2, 1e-1, 1.0)
TIE_RTOL, TIE_ATOL = 1e-9, 1e-12


@dataclass(frozen=True)
class TuningConfig:
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID
    subsample_fraction: float = 0.8
    n_subsamples: int = 50
    seed: int = 0
    refit_subsamples: bool = False
    rule_ridge: float = DEFAULT_RULE_RIDGE

    def __post_init__(self):
        a = tuple(float(x) for x in self.alpha_grid)
        lam = tuple(float(x) for x in self.lambda_grid)
        if not a or not lam:
            raise ValueError("grids must be non-empty")
        if any(np.diff(a) <= 0) or any(np.diff(lam) <= 0):
            raise ValueError("grids must be strictly ascending")
        if a[0] < 0 or a[-1] > 1:
            raise ValueError("alpha grid must lie in [0, 1]")
        if lam[0] <= 0:
            raise ValueError("lambda grid must be positive")
        if not 0 < self.subsample_fraction < 1:
            raise ValueError("subsample_fraction must lie in (0, 1)")
        if self.n_subsamples < 1:
            raise ValueError("n_subsamples must be positive")
        object.__setattr__(self, "alpha_grid", a)
        object.__setattr__(self, "lambda_grid", lam)


class KernelRidge:
    """Kernel ridge regression with an unpenalized intercept.

    Solves ``min |y - c - K a|^2 + ridge a'K a``, whose stationarity
    conditions are ``(K + ridge I) a + c 1 = y`` and ``1'a = 0``.
    """

    def __init__(self, spec: KernelSpec, ridge: float):
        if not ridge > 0:
            raise ValueError("ridge must be positive")
        self.spec = spec
        self.ridge = float(ridge)

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        K = gram(X, X, self.spec)
        K[np.diag_indices_from(K)] += self.ridge
        cf = linalg.cho_factor(K, check_finite=False)
        hy = linalg.cho_solve(cf, y, check_finite=False)
        h1 = linalg.cho_solve(cf, np.ones_like(y), check_finite=False)
        self.intercept_ = float(hy.sum() / h1.sum())
        self.coef_ = hy - self.intercept_ * h1
        self.X_ = X
        return self

    def predict(self, X):
        return self.intercept_ + gram(np.atleast_2d(X), self.X_, self.spec) @ self.coef_

    __call__ = predict


def cv_ridge(X, y, spec: KernelSpec, grid=KRR_RIDGE_GRID, folds: int = 5) -> float:
    """Ridge with the smallest 5-fold squared error (ties to the larger ridge)."""
    n = len(y)
    if n < 2 * folds:
        return float(max(grid))
    fold = np.arange(n) % folds
    best = (np.inf, None)
    for r in sorted(grid, reverse=True):
        err = 0.0
        for k in range(folds):
            tr, te = fold != k, fold == k
            m = KernelRidge(spec, r).fit(X[tr], y[tr])
            err += float(np.sum((m.predict(X[te]) - y[te]) ** 2))
        if err < best[0]:
            best = (err, r)
    return float(best[1])


def fit_outcome_regression(d: Dataset, arm: int, spec: KernelSpec, ridge: Optional[float] = None) -> KernelRidge:
    """Kernel ridge fit of ``Y`` on ``X`` among source rows with ``A == arm``."""
    m = d.A == arm
    if not m.any():
        raise ValueError(f"no source rows with A == {arm}")
    X, y = d.X_source[m], d.Y[m]
    if ridge is None:
        ridge = cv_ridge(X, y, spec)
    return KernelRidge(spec, ridge).fit(X, y)


def subsample_masks(n_s: int, cfg: TuningConfig) -> np.ndarray:
    """``(n_subsamples, n_s)`` boolean masks, a function of ``cfg.seed`` only."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5B5]))
    k = int(round(cfg.subsample_fraction * n_s))
    masks = np.zeros((cfg.n_subsamples, n_s), dtype=bool)
    for j in range(cfg.n_subsamples):
        masks[j, rng.choice(n_s, size=k, replace=False)] = True
    return masks


def subsample_imbalance(cache: GramCache, w_stacked: np.ndarray, masks_stacked: np.ndarray) -> np.ndarray:
    """Treated-vs-control squared MMD of ``w`` restricted to each subsample."""
    n1 = cache.n1
    W = masks_stacked.T * w_stacked[:, None]
    W1, W0 = W[:n1], W[n1:]
    s1, s0 = W1.sum(axis=0), W0.sum(axis=0)
    ok = (s1 > 0) & (s0 > 0)
    P1 = W1[:, ok] / s1[ok]
    P0 = W0[:, ok] / s0[ok]
    K = cache.Kss
    k11 = np.einsum("ij,ij->j", P1, K[:n1, :n1] @ P1)
    k00 = np.einsum("ij,ij->j", P0, K[n1:, n1:] @ P0)
    k10 = np.einsum("ij,ij->j", P1, K[:n1, n1:] @ P0)
    out = np.full(masks_stacked.shape[0], np.nan)
    out[ok] = np.maximum(k11 + k00 - 2.0 * k10, 0.0)
    return out


def _refit_imbalance(d: Dataset, spec: KernelSpec, h: BalanceHyperparams, masks: np.ndarray,
                     settings: Optional[QpSettings]) -> np.ndarray:
    out = np.full(masks.shape[0], np.nan)
    src = d.source_rows
    for j, m in enumerate(masks):
        keep = np.ones(d.n, dtype=bool)
        keep[src[~m]] = False
        A, Y = d.A[m], d.Y[m]
        if A.sum() == 0 or A.sum() == A.size:
            continue
        sub = Dataset(X=d.X[keep], S=d.S[keep], A=A, Y=Y)
        try:
            ws = solve_balancing_weights(sub, spec, h, settings=settings)
        except QpError:
            continue
        out[j] = ws.mmd_10
    return out


@dataclass
class LambdaSelection:
    alpha: float
    lam: float
    scores: np.ndarray
    solution: WeightSolution
    failed: list = field(default_factory=list)


def select_lambda(d: Dataset, spec: KernelSpec, alpha: float, cfg: TuningConfig,
                  cache: Optional[GramCache] = None, masks: Optional[np.ndarray] = None,
                  settings: Optional[QpSettings] = None) -> LambdaSelection:
    """Pick lambda for fixed ``alpha`` by mean subsample treated/control imbalance.

    The lambda grid is traversed from largest to smallest, each solve warm
    started from the previous one. Grid points whose QP fails get score
    ``nan`` and are skipped. Ties go to the smaller lambda.
    """
    cache = cache or GramCache(d, spec)
    if masks is None:
        masks = subsample_masks(d.n_s, cfg)
    masks_stacked = masks[:, cache.order]
    lams = cfg.lambda_grid
    scores = np.full(len(lams), np.nan)
    sols = [None] * len(lams)
    failed = []
    warm = None
    for j in range(len(lams) - 1, -1, -1):
        h = BalanceHyperparams(alpha, lams[j])
        try:
            ws = solve_balancing_weights(d, spec, h, warm=warm, cache=cache, settings=settings)
        except QpError as e:
            log.warning("QP failed at alpha=%g lambda=%g: %s", alpha, lams[j], e)
            failed.append(lams[j])
            continue
        warm = ws.info["qp"]
        sols[j] = ws
        if cfg.refit_subsamples:
            imb = _refit_imbalance(d, spec, h, masks, settings)
        else:
            imb = subsample_imbalance(cache, cache.to_stacked(ws.w), masks_stacked)
        if np.all(np.isnan(imb)):
            continue
        scores[j] = float(np.nanmean(imb))
    if np.all(np.isnan(scores)):
        raise QpError(f"every lambda failed for alpha={alpha}")
    best = float(np.nanmin(scores))
    # scores equal up to solver round-off count as ties
    j = int(np.flatnonzero(scores <= best + TIE_RTOL * best + TIE_ATOL)[0])
    return LambdaSelection(alpha=alpha, lam=lams[j], scores=scores, solution=sols[j], failed=failed)


@dataclass
class AlphaRecord:
    alpha: float
    lam: float
    value: float
    ess: float
    rule: LinearRule = None
    solution: WeightSolution = None
    scores: np.ndarray = None


@dataclass
class TuningResult:
    alpha: float
    lam: float
    solution: WeightSolution
    rule: LinearRule
    report: list

    def report_rows(self):
        return [{"alpha": r.alpha, "lambda": r.lam, "value": r.value, "ess": r.ess} for r in self.report]


def select_alpha(d: Dataset, spec: KernelSpec, cfg: TuningConfig, regressors=None,
                 cache: Optional[GramCache] = None, settings: Optional[QpSettings] = None) -> TuningResult:
    """Full grid search over ``(alpha, lambda)``.

    Args:
        regressors: optional ``(mu0, mu1)`` callables used instead of the
            kernel ridge fits to impute target potential outcomes.

    Raises:
        QpError: if every alpha fails.
    """
    cache = cache or GramCache(d, spec)
    masks = subsample_masks(d.n_s, cfg)
    if regressors is None:
        mu0 = fit_outcome_regression(d, 0, spec)
        mu1 = fit_outcome_regression(d, 1, spec)
    else:
        mu0, mu1 = regressors
    Xt = d.X_target
    m0, m1 = np.asarray(mu0(Xt)), np.asarray(mu1(Xt))
    report = []
    for a in cfg.alpha_grid:
        try:
            sel = select_lambda(d, spec, a, cfg, cache=cache, masks=masks, settings=settings)
        except QpError as e:
            log.warning("alpha=%g excluded: %s", a, e)
            continue
        rule = learn_linear_rule(sel.solution, d, ridge=cfg.rule_ridge)
        dec = rule.decide(Xt)
        value = float(np.mean(np.where(dec == 1, m1, m0)))
        report.append(AlphaRecord(alpha=a, lam=sel.lam, value=value, ess=sel.solution.ess,
                                  rule=rule, solution=sel.solution, scores=sel.scores))
    if not report:
        raise QpError("every alpha failed")
    best = max(r.value for r in report)
    chosen = [r for r in report if r.value == best][-1]
    return TuningResult(alpha=chosen.alpha, lam=chosen.lam, solution=chosen.solution,
                        rule=chosen.rule, report=report)
