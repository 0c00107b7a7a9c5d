"""Convex QP ``min w'Qw - 2b'w`` over ``{w >= 0, group sums = rhs}``.

The solver is ADMM on the splitting ``w = z`` with ``z`` confined to the
feasible set, so every z-step is an exact projection onto a product of
scaled simplices. The w-step solves ``(2Q + rho I) w = ...`` in the
eigenbasis of ``Q``; a change of ``rho`` therefore costs nothing, and a
caller that already knows the eigendecomposition (the balancing program
reuses one per alpha across the lambda grid) skips the O(n^3) step.

Once ADMM has located the active set, a primal-dual active-set pass solves
the reduced KKT system directly ("polishing"), which yields solutions
accurate to round-off instead of to the ADMM tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)


class QpError(RuntimeError):
    """Solver failure; carries the last residuals."""

    def __init__(self, msg, primal_residual=float("nan"), dual_residual=float("nan"), iterations=0):
        super().__init__(f"{msg} (primal={primal_residual:.3g}, dual={dual_residual:.3g}, iters={iterations})")
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.iterations = iterations


@dataclass(eq=False)
class QpProblem:
    """Problem data.

    Attributes:
        Q: symmetric positive definite ``(m, m)`` matrix.
        b: length-``m`` linear term (objective uses ``-2 b'w``).
        groups: index arrays partitioning ``range(m)``; each group sums to ``rhs``.
        rhs: common right-hand side of the group-sum constraints.
        c: constant added when reporting the objective.
        eig: optional ``(evals, evecs)`` of ``Q``.
    """

    Q: np.ndarray
    b: np.ndarray
    groups: Sequence[np.ndarray]
    rhs: float
    c: float = 0.0
    eig: Optional[tuple] = None

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        m = self.b.size
        if self.Q.shape != (m, m):
            raise ValueError("Q must be square with the size of b")
        scale = max(1.0, float(np.abs(self.Q).max()))
        if np.abs(self.Q - self.Q.T).max() > 1e-10 * scale:
            raise ValueError("Q is not symmetric")
        self.groups = [np.asarray(g, dtype=int) for g in self.groups]
        if any(g.size == 0 for g in self.groups):
            raise QpError("infeasible: empty constraint group")
        cover = np.sort(np.concatenate(self.groups))
        if not np.array_equal(cover, np.arange(m)):
            raise ValueError("groups must partition the variable index set")
        if not self.rhs > 0:
            raise ValueError("rhs must be positive")

    @property
    def size(self) -> int:
        return self.b.size

    def objective(self, w) -> float:
        return float(w @ self.Q @ w - 2.0 * self.b @ w + self.c)


@dataclass
class QpSettings:
    tol: float = 1e-7
    max_iter: int = 50_000
    rho: float = 1.0
    relax: float = 1.6
    adaptive_rho: bool = True
    polish: bool = True
    admm_rel_tol: float = 1e-5
    check_every: int = 5


@dataclass(eq=False)
class QpSolution:
    """Solver output.

    Residuals are reported for the problem rescaled so that
    ``max(diag(Q)) = 1``, which leaves the minimizer unchanged.
    """

    w: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    polished: bool = False
    dual: Optional[np.ndarray] = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)


def project_groups(v: np.ndarray, groups, rhs: float) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w[g]) = rhs for each g}``."""
    out = np.empty_like(v)
    for g in groups:
        out[g] = project_simplex(v[g], rhs)
    return out


def project_simplex(v: np.ndarray, r: float) -> np.ndarray:
    """Projection of ``v`` onto ``{w >= 0, sum(w) = r}`` by the sort rule."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - r
    k = np.arange(1, v.size + 1)
    cond = u - css / k > 0
    j = np.flatnonzero(cond)[-1]
    theta = css[j] / (j + 1)
    return np.maximum(v - theta, 0.0)


def kkt_residuals(Q, b, groups, rhs, w):
    """Primal infeasibility and stationarity/complementarity residual at ``w``.

    Multipliers are reconstructed from ``w``: per group, ``nu`` is the
    ``w``-weighted mean of the gradient and ``mu = max(grad - nu, 0)``.
    The dual residual is the larger of ``|grad - nu - mu|_inf`` and
    ``max(mu * w)``.
    """
    grad = 2.0 * (Q @ w) - 2.0 * b
    primal = max(0.0, float(-w.min()))
    dual = 0.0
    nus = []
    for g in groups:
        wg = np.maximum(w[g], 0.0)
        primal = max(primal, abs(float(w[g].sum()) - rhs))
        gg = grad[g]
        nu = float(wg @ gg / wg.sum()) if wg.sum() > 0 else float(gg.min())
        mu = np.maximum(gg - nu, 0.0)
        stat = float(np.max(nu - gg, initial=0.0))
        comp = float(np.max(mu * wg))
        dual = max(dual, stat, comp)
        nus.append(nu)
    return primal, dual, np.array(nus)


class _Scaled:
    """Problem rescaled to unit max-diagonal, with its eigendecomposition."""

    def __init__(self, p: QpProblem):
        s = float(np.max(np.diag(p.Q)))
        if not s > 0:
            raise ValueError("Q must have a positive diagonal")
        self.s = s
        self.Q = p.Q / s
        self.b = p.b / s
        if p.eig is not None:
            evals, evecs = p.eig
            self.evals = np.asarray(evals) / s
            self.V = np.asarray(evecs)
        else:
            self.evals, self.V = np.linalg.eigh(self.Q)
        if self.evals.min() <= 0:
            raise QpError("Q is not positive definite")
        self.groups = p.groups
        self.rhs = float(p.rhs)
        self.Vtb = self.V.T @ self.b

    def wstep(self, rhs_t, rho):
        # (2Q + rho I) w = 2b + rho t, in the eigenbasis
        return self.V @ ((2.0 * self.Vtb + rho * (self.V.T @ rhs_t)) / (2.0 * self.evals + rho))


def _polish(sp: _Scaled, active: np.ndarray, tol: float, max_steps: int = 30):
    """Primal-dual active-set iterations on the reduced KKT system.

    Returns ``(w, steps)`` on success or ``(None, steps)``.
    """
    m = sp.b.size
    gid = np.empty(m, dtype=int)
    for k, g in enumerate(sp.groups):
        gid[g] = k
    ng = len(sp.groups)
    seen = set()
    active = active.copy()
    for step in range(1, max_steps + 1):
        key = active.tobytes()
        if key in seen:
            return None, step
        seen.add(key)
        F = np.flatnonzero(~active)
        counts = np.bincount(gid[F], minlength=ng)
        if np.any(counts == 0):
            return None, step
        E = np.zeros((F.size, ng))
        E[np.arange(F.size), gid[F]] = 1.0
        try:
            cf = linalg.cho_factor(sp.Q[np.ix_(F, F)], check_finite=False)
        except linalg.LinAlgError:
            return None, step
        hb = linalg.cho_solve(cf, sp.b[F], check_finite=False)
        he = linalg.cho_solve(cf, E, check_finite=False)
        # w = hb + he nu / 2 with E'w = rhs
        nu = 2.0 * np.linalg.solve(E.T @ he, sp.rhs - E.T @ hb)
        w = np.zeros(m)
        w[F] = hb + he @ nu / 2.0
        grad = 2.0 * (sp.Q @ w) - 2.0 * sp.b
        mu = grad - nu[gid]
        wscale = max(1.0, float(np.abs(w).max()))
        bad_w = (~active) & (w < -1e-12 * wscale)
        bad_mu = active & (mu < -0.1 * tol)
        if not bad_w.any() and not bad_mu.any():
            return np.maximum(w, 0.0), step
        active = (active & ~bad_mu) | bad_w
    return None, max_steps


def solve_qp(p: QpProblem, warm_start=None, tol: Optional[float] = None,
             settings: Optional[QpSettings] = None, warm_dual=None,
             record_history: bool = False) -> QpSolution:
    """Solve ``p`` to KKT tolerance ``tol``.

    Args:
        p: problem data.
        warm_start: optional starting point (projected onto the feasible set).
        tol: absolute KKT tolerance; overrides ``settings.tol``.
        settings: solver settings.
        warm_dual: optional scaled ADMM dual from a previous solution.
        record_history: keep ``(iteration, objective, rho)`` per check.

    Raises:
        QpError: if the KKT tolerance is not met within ``max_iter`` iterations.
    """
    st = settings or QpSettings()
    tol = st.tol if tol is None else tol
    sp = _Scaled(p)
    m = p.size
    groups, rhs = sp.groups, sp.rhs
    history = []

    def finish(w, iters, polished, u):
        primal, dual, _ = kkt_residuals(sp.Q, sp.b, groups, rhs, w)
        return QpSolution(w=w, objective=p.objective(w), primal_residual=primal,
                          dual_residual=dual, iterations=iters, polished=polished,
                          dual=u, history=history)

    if warm_start is not None:
        z = project_groups(np.asarray(warm_start, dtype=float), groups, rhs)
        if st.polish:
            w, _ = _polish(sp, z <= 0, tol)
            if w is not None:
                primal, dual, _ = kkt_residuals(sp.Q, sp.b, groups, rhs, w)
                if primal <= tol and dual <= tol:
                    return finish(w, 0, True, warm_dual)
    else:
        z = np.empty(m)
        for g in groups:
            z[g] = rhs / g.size
    u = np.zeros(m) if warm_dual is None else np.asarray(warm_dual, dtype=float).copy()
    rho = st.rho
    rel = st.admm_rel_tol
    it = 0
    primal = dual = float("inf")
    while it < st.max_iter:
        it += 1
        w = sp.wstep(z - u, rho)
        wh = st.relax * w + (1.0 - st.relax) * z
        z_old = z
        z = project_groups(wh + u, groups, rhs)
        u = u + wh - z
        if it % st.check_every:
            continue
        r_prim = float(np.abs(w - z).max())
        r_dual = float(rho * np.abs(z - z_old).max())
        if record_history:
            history.append((it, p.objective(z), rho))
        prim_scale = max(float(np.abs(w).max()), float(np.abs(z).max()), 1e-30)
        dual_scale = max(float(np.abs(sp.Q @ z).max()), float(np.abs(sp.b).max()),
                         float(rho * np.abs(u).max()), 1e-30)
        if r_prim <= max(rel * prim_scale, 0.1 * tol) and r_dual <= max(rel * dual_scale, 0.1 * tol):
            if st.polish:
                wp, steps = _polish(sp, z <= 0, tol)
                if wp is not None:
                    primal, dual, _ = kkt_residuals(sp.Q, sp.b, groups, rhs, wp)
                    if primal <= tol and dual <= tol:
                        return finish(wp, it, True, u)
            primal, dual, _ = kkt_residuals(sp.Q, sp.b, groups, rhs, z)
            if primal <= tol and dual <= tol:
                return finish(z, it, False, u)
            rel *= 0.1
        if st.adaptive_rho and it % (5 * st.check_every) == 0:
            ratio = (r_prim / prim_scale) / max(r_dual / dual_scale, 1e-300)
            if ratio > 10.0 or ratio < 0.1:
                new_rho = float(np.clip(rho * np.sqrt(ratio), 1e-6, 1e6))
                u *= rho / new_rho
                rho = new_rho
    primal, dual, _ = kkt_residuals(sp.Q, sp.b, groups, rhs, z)
    raise QpError("ADMM did not reach tolerance", primal, dual, it)
