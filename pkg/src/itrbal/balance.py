"""Three-way kernel balancing weights.

For treated/control source groups and the target sample, the weights
minimize

    alpha * MMD^2(treated, target) + alpha * MMD^2(control, target)
    + (1 - alpha) * MMD^2(treated, control) + lambda / n_s^2 * sum(w^2)

subject to each treatment group's weights summing to ``n_s`` and ``w >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, WeightSolution, effective_sample_size
from .kernel import KernelSpec, gram
from .qp import QpProblem, QpSettings, QpSolution, solve_qp


@dataclass(frozen=True)
class BalanceHyperparams:
    alpha: float
    lam: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


class GramCache:
    """Kernel blocks for one dataset, shared across hyperparameter values.

    Variables are stacked treated-first: positions ``0..n1-1`` are the treated
    source rows, ``n1..n_s-1`` the control rows. ``order`` maps stacked
    positions back to source-row positions (``Dataset.A`` order).
    """

    def __init__(self, d: Dataset, spec: KernelSpec):
        self.d = d
        self.spec = spec
        Xs, Xt = d.X_source, d.X_target
        pos1 = np.flatnonzero(d.A == 1)
        pos0 = np.flatnonzero(d.A == 0)
        self.order = np.concatenate([pos1, pos0])
        self.n1, self.n0 = pos1.size, pos0.size
        self.n_s, self.n_t = d.n_s, d.n_t
        Xstack = Xs[self.order]
        self.Kss = gram(Xstack, Xstack, spec)
        Kst = gram(Xstack, Xt, spec)
        self.kst_sum = Kst.sum(axis=1)
        self.ktt_mean = float(gram(Xt, Xt, spec).sum()) / self.n_t ** 2
        self._eig = {}

    @property
    def groups(self):
        return [np.arange(self.n1), np.arange(self.n1, self.n_s)]

    def balance_matrix(self, alpha: float) -> np.ndarray:
        """``n_s^2 Q - lambda I``: Gram blocks with cross blocks scaled by ``alpha - 1``."""
        M = self.Kss.copy()
        n1 = self.n1
        M[:n1, n1:] *= alpha - 1.0
        M[n1:, :n1] *= alpha - 1.0
        return M

    def eig(self, alpha: float):
        key = float(alpha)
        if key not in self._eig:
            if len(self._eig) > 2:
                self._eig.pop(next(iter(self._eig)))
            evals, evecs = np.linalg.eigh(self.balance_matrix(alpha))
            self._eig[key] = (np.maximum(evals, 0.0), evecs)
        return self._eig[key]

    def to_stacked(self, w_source: np.ndarray) -> np.ndarray:
        return np.asarray(w_source, dtype=float)[self.order]

    def to_source(self, w_stacked: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_s)
        out[self.order] = w_stacked
        return out

    def group_mmds_stacked(self, w: np.ndarray):
        """``(mmd_t1, mmd_t0, mmd_10)`` for stacked weights ``w``."""
        n1 = self.n1
        p1 = w[:n1] / w[:n1].sum()
        p0 = w[n1:] / w[n1:].sum()
        K = self.Kss
        k11 = p1 @ K[:n1, :n1] @ p1
        k00 = p0 @ K[n1:, n1:] @ p0
        k10 = p1 @ K[:n1, n1:] @ p0
        t1 = k11 - 2.0 * (p1 @ self.kst_sum[:n1]) / self.n_t + self.ktt_mean
        t0 = k00 - 2.0 * (p0 @ self.kst_sum[n1:]) / self.n_t + self.ktt_mean
        c10 = k11 + k00 - 2.0 * k10
        return tuple(max(float(v), 0.0) for v in (t1, t0, c10))


def assemble_qp(d: Dataset, spec: KernelSpec, h: BalanceHyperparams,
                cache: Optional[GramCache] = None, with_eig: bool = False) -> QpProblem:
    """Quadratic form ``w'Qw - 2b'w + c`` of the balancing objective.

    Variables are stacked treated-first (see :class:`GramCache`).
    """
    cache = cache or GramCache(d, spec)
    n_s, n_t = cache.n_s, cache.n_t
    a, lam = h.alpha, h.lam
    M = cache.balance_matrix(a)
    Q = (M + lam * np.eye(n_s)) / n_s ** 2
    b = a / (n_s * n_t) * cache.kst_sum
    c = 2.0 * a * cache.ktt_mean
    eig = None
    if with_eig:
        evals, evecs = cache.eig(a)
        eig = ((evals + lam) / n_s ** 2, evecs)
    return QpProblem(Q=Q, b=b, groups=cache.groups, rhs=float(n_s), c=c, eig=eig)


def solve_balancing_weights(d: Dataset, spec: KernelSpec, h: BalanceHyperparams,
                            warm: Optional[QpSolution] = None, cache: Optional[GramCache] = None,
                            settings: Optional[QpSettings] = None) -> WeightSolution:
    """Solve the balancing program and attach diagnostics.

    ``warm`` is a previous :class:`QpSolution` for the same dataset (e.g. the
    neighbouring lambda on a grid). The returned ``info["qp"]`` holds this
    solve's :class:`QpSolution` for chaining.
    """
    cache = cache or GramCache(d, spec)
    prob = assemble_qp(d, spec, h, cache=cache, with_eig=True)
    sol = solve_qp(prob, warm_start=None if warm is None else warm.w,
                   warm_dual=None if warm is None else warm.dual, settings=settings)
    ws = sol.w.copy()
    n1 = cache.n1
    ws[:n1] *= cache.n_s / ws[:n1].sum()
    ws[n1:] *= cache.n_s / ws[n1:].sum()
    t1, t0, c10 = cache.group_mmds_stacked(ws)
    w = cache.to_source(ws)
    return WeightSolution(
        w=w, alpha=h.alpha, lam=h.lam, objective=prob.objective(ws),
        mmd_t1=t1, mmd_t0=t0, mmd_10=c10, ess=effective_sample_size(w),
        method="balance", info={"qp": sol, "iterations": sol.iterations},
    )


def balance_objective(d: Dataset, spec: KernelSpec, h: BalanceHyperparams, w_source: np.ndarray,
                      cache: Optional[GramCache] = None) -> float:
    """Objective value at source-ordered weights ``w_source``."""
    cache = cache or GramCache(d, spec)
    prob = assemble_qp(d, spec, h, cache=cache)
    return prob.objective(cache.to_stacked(w_source))
