"""Model-based baseline weights: IPW, importance, overlap, oracle and entropy balancing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit, logsumexp

from .data import Dataset, WeightSolution, effective_sample_size, normalize_groups

log = logging.getLogger(__name__)

CLIP = 1e-6
DEFAULT_RIDGE = 1e-6


class ConvergenceError(RuntimeError):
    pass


class SeparationError(ConvergenceError):
    pass


@dataclass(frozen=True, eq=False)
class ProbabilityModel:
    """Fitted logistic model for a propensity or participation probability."""

    coefficients: np.ndarray
    kind: str = "propensity"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return expit(self.coefficients[0] + X @ self.coefficients[1:])


def _logistic_parts(Z, y, sw, pen, beta):
    eta = Z @ beta
    p = expit(eta)
    nll = -float(sw @ (y * log_expit(eta) + (1 - y) * log_expit(-eta))) + 0.5 * float(pen @ beta ** 2)
    grad = Z.T @ (sw * (p - y)) + pen * beta
    return nll, grad, p


def fit_logistic(X: np.ndarray, y: np.ndarray, sample_weight: Optional[np.ndarray] = None,
                 ridge: float = 0.0, tol: float = 1e-8, max_iter: int = 200) -> np.ndarray:
    """Weighted ridge logistic regression by damped Newton.

    Minimizes ``-sum_i s_i loglik_i + ridge/2 * |slopes|^2``; the intercept is
    unpenalized. Returns ``[intercept, slopes...]``.

    Raises:
        SeparationError: classes are perfectly separated and ``ridge == 0``.
        ConvergenceError: gradient norm above ``tol`` after ``max_iter`` steps.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and np.size(y) != 1:
        X = X.T
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    pos = sw > 0
    if not (np.any(y[pos] == 1) and np.any(y[pos] == 0)):
        raise ValueError("need at least one positive and one negative label")
    Z = np.hstack([np.ones((n, 1)), X])
    pen = np.full(p + 1, float(ridge))
    pen[0] = 0.0
    beta = np.zeros(p + 1)
    ybar = float(sw @ y / sw.sum())
    beta[0] = np.log(ybar / (1 - ybar))
    nll, grad, prob = _logistic_parts(Z, y, sw, pen, beta)

    def newton_step(prob, grad):
        h = sw * prob * (1 - prob)
        H = (Z * h[:, None]).T @ Z + np.diag(pen)
        try:
            return linalg.solve(H, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            return np.linalg.lstsq(H, grad, rcond=None)[0]

    def finalize(beta, nll, grad, prob):
        if ridge == 0:
            eta = Z[pos] @ beta
            if np.all((eta > 0) == (y[pos] == 1)):
                raise SeparationError("classes are perfectly separated; use ridge > 0")
        # one last full Newton step: quadratic convergence buys several digits
        cand = beta - newton_step(prob, grad)
        nll_c, grad_c, _ = _logistic_parts(Z, y, sw, pen, cand)
        if np.abs(grad_c).max() < np.abs(grad).max() and nll_c <= nll + 1e-12 * abs(nll):
            return cand
        return beta

    for it in range(max_iter):
        if np.abs(grad).max() <= tol:
            return finalize(beta, nll, grad, prob)
        step = newton_step(prob, grad)
        t = 1.0
        gnorm = np.abs(grad).max()
        while True:
            cand = beta - t * step
            nll_c, grad_c, prob_c = _logistic_parts(Z, y, sw, pen, cand)
            if nll_c <= nll - 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            # near the optimum the decrease drowns in round-off; accept on gradient
            if nll_c <= nll + 1e-12 * abs(nll) and np.abs(grad_c).max() < gnorm:
                break
            t *= 0.5
        if ridge == 0 and np.abs(cand).max() > 1e3:
            raise SeparationError("coefficients diverge (perfect separation?); use ridge > 0")
        beta, nll, grad, prob = cand, nll_c, grad_c, prob_c
    if np.abs(grad).max() <= tol:
        return finalize(beta, nll, grad, prob)
    raise ConvergenceError(f"logistic fit did not converge: |grad| = {np.abs(grad).max():.3g}")


def fit_propensity(d: Dataset, ridge: float = DEFAULT_RIDGE) -> ProbabilityModel:
    return ProbabilityModel(fit_logistic(d.X_source, d.A, ridge=ridge), "propensity")


def fit_participation(d: Dataset, ridge: float = DEFAULT_RIDGE) -> ProbabilityModel:
    return ProbabilityModel(fit_logistic(d.X, d.S, ridge=ridge), "participation")


def _finish(d: Dataset, raw: np.ndarray, method: str, info=None) -> WeightSolution:
    w = normalize_groups(raw, d.A)
    return WeightSolution(w=w, ess=effective_sample_size(w), method=method, info=info or {})


def classical_weights(d: Dataset, kind: str, pi_hat: np.ndarray, rho_hat: Optional[np.ndarray] = None,
                      clip: float = CLIP) -> WeightSolution:
    """IPW, importance or overlap weights from per-source-row probabilities.

    ``pi_hat`` and ``rho_hat`` are evaluated at the source rows (aligned with
    ``d.A``). Probabilities are clipped to ``[clip, 1 - clip]``; the number of
    clipped entries is reported in ``info["clipped"]``.
    """
    pi = np.asarray(pi_hat, dtype=float)
    if pi.shape != (d.n_s,):
        raise ValueError("pi_hat must have one entry per source row")
    probs = [pi] if rho_hat is None else [pi, np.asarray(rho_hat, dtype=float)]
    for q in probs:
        if np.any(~np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
            raise ValueError("probabilities must lie in [0, 1]")
    clipped = int(sum(np.sum((q < clip) | (q > 1 - clip)) for q in probs))
    pi = np.clip(pi, clip, 1 - clip)
    A = d.A
    ipw = A / pi + (1 - A) / (1 - pi)
    if kind == "ipw":
        raw = ipw
    elif kind == "importance":
        if rho_hat is None:
            raise ValueError("importance weights need rho_hat")
        r = np.clip(np.asarray(rho_hat, dtype=float), clip, 1 - clip)
        raw = ipw * (1 - r) / r
    elif kind == "overlap":
        raw = np.where(A == 1, 1 - pi, pi)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return _finish(d, raw, kind, {"clipped": clipped})


def estimated_weights(d: Dataset, kind: str, ridge: float = DEFAULT_RIDGE) -> WeightSolution:
    """Classical weights with logistic-regression probability estimates."""
    pi = fit_propensity(d, ridge).predict(d.X_source)
    rho = fit_participation(d, ridge).predict(d.X_source) if kind == "importance" else None
    return classical_weights(d, kind, pi, rho)


def moment_basis(X: np.ndarray, squares: bool = False) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.hstack([X, X ** 2]) if squares else X


def entropy_weights(C: np.ndarray, target: np.ndarray, tol: float = 1e-8, max_iter: int = 200,
                    return_trace: bool = False):
    """Maximum-entropy weights on ``C``'s rows whose mean equals ``target``.

    Minimizes ``sum w log w`` subject to ``sum w = 1`` and ``C' w = target``
    through the dual ``min_g log sum_i exp((c_i - target)' g)``, solved by
    damped Newton. Returns weights summing to 1.

    Raises:
        ConvergenceError: constraints not met to ``tol`` (infeasible or
            ill-conditioned moment system); message carries the violation.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = C - np.asarray(target, dtype=float)
    m, k = D.shape
    # rescale columns; the dual solution transforms back exactly
    sc = np.abs(D).max(axis=0)
    sc[sc == 0] = 1.0
    Ds = D / sc
    g = np.zeros(k)
    trace = []

    def dual(g):
        return float(logsumexp(Ds @ g))

    f = dual(g)
    for it in range(max_iter):
        eta = Ds @ g
        p = np.exp(eta - logsumexp(eta))
        grad = Ds.T @ p
        trace.append(f)
        if np.abs(grad * sc).max() <= tol:
            break
        H = (Ds * p[:, None]).T @ Ds - np.outer(grad, grad)
        H[np.diag_indices_from(H)] += 1e-14
        try:
            step = linalg.solve(H, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            f_new = dual(g - t * step)
            if f_new <= f - 1e-4 * t * float(grad @ step) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            break
        g = g - t * step
        f = f_new
    eta = Ds @ g
    p = np.exp(eta - logsumexp(eta))
    viol = float(np.abs(D.T @ p).max())
    if not viol <= tol:
        raise ConvergenceError(f"entropy balancing failed: max constraint violation {viol:.3g}")
    return (p, trace) if return_trace else p


def entropy_balancing(d: Dataset, target: str = "target_moments", squares: bool = False,
                      tol: float = 1e-8) -> WeightSolution:
    """Entropy-balancing weights for each treatment group.

    ``target="target_moments"`` matches target-sample means (ebal_t);
    ``"source_moments"`` matches whole-source-sample means (ebal_s).
    """
    B = moment_basis(d.X, squares)
    if target == "target_moments":
        tgt = B[d.S == 0].mean(axis=0)
    elif target == "source_moments":
        tgt = B[d.S == 1].mean(axis=0)
    else:
        raise ValueError(f"unknown target {target!r}")
    Bs = B[d.S == 1]
    raw = np.empty(d.n_s)
    for a in (0, 1):
        m = d.A == a
        raw[m] = entropy_weights(Bs[m], tgt, tol=tol)
    name = "ebal_t" if target == "target_moments" else "ebal_s"
    return _finish(d, raw, name)


def oracle_weights(d: Dataset, kind: str, oracle) -> WeightSolution:
    """Normalized true importance (``w*``) or overlap (``w_dagger``) weights."""
    Xs = d.X_source
    if kind == "importance":
        raw = oracle.importance_weight(d.A, Xs)
    elif kind == "overlap":
        raw = oracle.overlap_weight(d.A, Xs)
    else:
        raise ValueError(f"unknown oracle kind {kind!r}")
    return _finish(d, raw, f"oracle_{kind}")
