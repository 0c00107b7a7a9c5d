"""Simulation designs with covariate shift, oracle functions and rule scoring.

Covariates are uniform on ``[-2, 2]^4``. Population membership, treatment,
and outcome follow the three assignment designs (``linear``,
``linear_bad_overlap``, ``nonlinear``) with a CATE that mixes a linear and a
nonlinear component through ``kappa``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .data import Dataset, LinearRule

ASSIGNMENTS = ("linear", "linear_bad_overlap", "nonlinear")
P = 4
NOISE_SD = 0.5

# Independent child streams per draw type, so switching the assignment
# design leaves covariates and membership untouched under a fixed seed.
STREAM_X, STREAM_S, STREAM_A, STREAM_EPS = range(4)


def normal_cdf(z):
    """Standard normal CDF."""
    return special.ndtr(z)


def G(z):
    return 0.8 * normal_cdf(z) + 0.1


def rho(x):
    x = np.atleast_2d(x)
    return G(x[:, 1] - 1.2 * x[:, 0])


def propensity(assignment: str) -> Callable:
    if assignment == "linear":
        return lambda x: G(0.5 * np.atleast_2d(x)[:, 0] + 0.3 * np.atleast_2d(x)[:, 1] - 0.3)
    if assignment == "linear_bad_overlap":
        return lambda x: G(1.6 * np.atleast_2d(x)[:, 0] + 1.3 * np.atleast_2d(x)[:, 1] - 0.8)
    if assignment == "nonlinear":
        def pi(x):
            x = np.atleast_2d(x)
            x1, x2 = x[:, 0], x[:, 1]
            return G(0.4 * x1 ** 2 + 0.4 * x2 ** 2 + 0.5 * x1 * x2 - 0.4 * x1 + 0.4 * x2 - 0.9)
        return pi
    raise ValueError(f"unknown assignment {assignment!r}; expected one of {ASSIGNMENTS}")


def main_effect(x):
    x = np.atleast_2d(x)
    return normal_cdf(-0.6 * x[:, 0] - 0.6 * x[:, 1] + 0.2 * x[:, 2] + 0.5) + 0.5


def tau_linear(x):
    x = np.atleast_2d(x)
    return normal_cdf(0.4 * x[:, 1] + 0.6 * x[:, 0]) - 0.5


def tau_nonlinear(x):
    x = np.atleast_2d(x)
    x1, x2 = x[:, 0], x[:, 1]
    return normal_cdf(1.5 * x2 + 0.8 * x1 - 0.4 * (x1 - x2) ** 2 - 0.3) - 0.07 * (x1 - x2) ** 2


@dataclass(frozen=True)
class ScenarioConfig:
    assignment: str = "linear"
    kappa: float = 0.0
    n: int = 1600
    seed: int = 0

    def __post_init__(self):
        if self.assignment not in ASSIGNMENTS:
            raise ValueError(f"unknown assignment {self.assignment!r}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if self.n < 4:
            raise ValueError("n must be at least 4")

    @property
    def label(self) -> str:
        return f"{self.assignment}_k{self.kappa:g}"


def _over_square(f) -> float:
    """Mean of ``f(x1, x2)`` for ``(x1, x2)`` uniform on ``[-2, 2]^2``."""
    val, _ = integrate.dblquad(lambda x2, x1: f(np.array([[x1, x2, 0.0, 0.0]]))[0],
                               -2, 2, -2, 2, epsabs=1e-12, epsrel=1e-12)
    return val / 16.0


@dataclass(frozen=True)
class OracleFunctions:
    """True nuisance functions for one scenario.

    ``tau_override`` replaces the CATE (and shifts ``mu0``/``mu1``
    accordingly); it exists for degenerate-CATE checks.
    """

    assignment: str
    kappa: float
    tau_override: Optional[Callable] = None

    def pi(self, x):
        return propensity(self.assignment)(x)

    def rho(self, x):
        return rho(x)

    def m(self, x):
        return main_effect(x)

    def tau(self, x):
        if self.tau_override is not None:
            return np.broadcast_to(np.asarray(self.tau_override(np.atleast_2d(x)), dtype=float),
                                   (np.atleast_2d(x).shape[0],)).copy()
        return self.kappa * tau_nonlinear(x) + (1.0 - self.kappa) * tau_linear(x)

    def mu0(self, x):
        return self.m(x) - self.tau(x) / 2.0

    def mu1(self, x):
        return self.m(x) + self.tau(x) / 2.0

    @cached_property
    def p_source(self) -> float:
        """``P(S = 1)``."""
        return _over_square(rho)

    @cached_property
    def c_pi(self) -> float:
        """``E[pi(X)(1 - pi(X)) | S = 1]``."""
        pi = self.pi
        num = _over_square(lambda x: pi(x) * (1 - pi(x)) * rho(x))
        return num / self.p_source

    def importance_weight(self, a, x):
        """Target-standardizing importance weight ``w*(a, x)``."""
        a = np.asarray(a)
        pi, r = self.pi(x), self.rho(x)
        es = self.p_source
        return (a / pi + (1 - a) / (1 - pi)) * es * (1 - r) / ((1 - es) * r)

    def overlap_weight(self, a, x):
        """Overlap limit ``w_dagger(a, x)``."""
        a = np.asarray(a)
        pi = self.pi(x)
        return pi * (1 - pi) / self.c_pi * (a / pi + (1 - a) / (1 - pi))


def oracle_for(cfg: ScenarioConfig) -> OracleFunctions:
    return OracleFunctions(cfg.assignment, cfg.kappa)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def generate(cfg: ScenarioConfig, rng=None):
    """Draw one dataset; returns ``(Dataset, OracleFunctions)``.

    With ``rng=None`` the draws come from child streams of ``cfg.seed``.
    Passing a ``SeedSequence`` or int uses that instead of ``cfg.seed``.
    """
    seed = cfg.seed if rng is None else rng
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2 ** 63))
    gx, gs, ga, ge = _streams(seed)
    orc = oracle_for(cfg)
    n = cfg.n
    while True:
        X = gx.uniform(-2.0, 2.0, size=(n, P))
        S = (gs.uniform(size=n) < orc.rho(X)).astype(int)
        src = S == 1
        A = (ga.uniform(size=n) < orc.pi(X)).astype(int)[src]
        if 2 <= src.sum() < n and 0 < A.sum() < src.sum():
            break
    eps = ge.normal(0.0, NOISE_SD, size=n)[src]
    Xs = X[src]
    Y = orc.m(Xs) + (A - 0.5) * orc.tau(Xs) + eps
    return Dataset(X=X, S=S, A=A, Y=Y), orc


def oracle_sidecar(d: Dataset, orc: OracleFunctions) -> dict:
    """Per-row oracle quantities for every pooled row."""
    X = d.X
    return {"pi": orc.pi(X), "rho": orc.rho(X), "mu0": orc.mu0(X),
            "mu1": orc.mu1(X), "tau": orc.tau(X)}


def sample_target(m: int, rng) -> np.ndarray:
    """``m`` covariate draws from the target population by rejection on ``1 - rho``."""
    rng = np.random.default_rng(rng)
    out = []
    have = 0
    while have < m:
        batch = max(1024, int(2.2 * (m - have)))
        X = rng.uniform(-2.0, 2.0, size=(batch, P))
        keep = rng.uniform(size=batch) < 1.0 - rho(X)
        out.append(X[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:m]


def rule_from_angle(theta: float, b: float) -> LinearRule:
    return LinearRule(beta0=b, beta=(np.cos(theta), np.sin(theta), 0.0, 0.0))


def _best_threshold(z_sorted_desc, csum, bgrid):
    # value(b) = sum of tau over z >= -b; z sorted descending with cumulative tau
    k = np.searchsorted(-z_sorted_desc, bgrid, side="right")
    vals = np.where(k > 0, csum[np.maximum(k - 1, 0)], 0.0)
    j = int(np.argmax(vals))
    return vals[j], j


def grid_search_rule(X: np.ndarray, tau: np.ndarray, thetas: np.ndarray, bgrid: np.ndarray):
    """Maximize ``sum tau * 1{cos(t) x1 + sin(t) x2 + b >= 0}`` over a grid.

    Returns ``(value, theta, b)``; ties resolve to the first grid point.
    """
    best = (-np.inf, 0.0, 0.0)
    for th in thetas:
        z = np.cos(th) * X[:, 0] + np.sin(th) * X[:, 1]
        order = np.argsort(-z, kind="stable")
        zs = z[order]
        csum = np.cumsum(tau[order])
        v, j = _best_threshold(zs, csum, bgrid)
        if v > best[0]:
            best = (v, th, bgrid[j])
    return best


def optimal_linear_rule(cfg: ScenarioConfig, m_test: int = 100_000, rng=None, X_test=None,
                        oracle: Optional[OracleFunctions] = None, theta_steps: int = 720,
                        b_step: float = 0.01, refine: int = 10, return_value: bool = False):
    """Best rule ``1{cos(t) x1 + sin(t) x2 + b >= 0}`` on a target test sample.

    A coarse pass over ``theta_steps`` angles and ``b`` in ``[-3, 3]`` is
    followed by one pass at ``refine``-times finer resolution around the
    incumbent.
    """
    orc = oracle or oracle_for(cfg)
    if X_test is None:
        X_test = sample_target(m_test, rng)
    tau = orc.tau(X_test)
    dth = 2 * np.pi / theta_steps
    thetas = np.arange(theta_steps) * dth
    bgrid = np.round(np.arange(-3.0, 3.0 + b_step / 2, b_step), 12)
    v, th, b = grid_search_rule(X_test, tau, thetas, bgrid)
    if refine and refine > 1:
        th_f = th + np.arange(-refine, refine + 1) * (dth / refine)
        b_f = b + np.arange(-refine, refine + 1) * (b_step / refine)
        v2, th2, b2 = grid_search_rule(X_test, tau, th_f, b_f)
        if v2 > v:
            v, th, b = v2, th2, b2
    rule = rule_from_angle(th, b)
    if return_value:
        return rule, float(v), (float(th), float(b))
    return rule


@dataclass(frozen=True)
class RuleEvaluation:
    value: float
    regret: float
    accuracy: float
    value2: float


def evaluate_rule(rule: LinearRule, cfg: ScenarioConfig, ref: LinearRule, m_test: int = 100_000,
                  rng=None, X_test=None, oracle: Optional[OracleFunctions] = None) -> RuleEvaluation:
    """Score ``rule`` against ``ref`` with oracle outcome means on a target test sample."""
    orc = oracle or oracle_for(cfg)
    if X_test is None:
        X_test = sample_target(m_test, rng)
    mu0, mu1 = orc.mu0(X_test), orc.mu1(X_test)
    tau = mu1 - mu0
    d = rule.decide(X_test)
    dr = ref.decide(X_test)
    value = float(np.mean(np.where(d == 1, mu1, mu0)))
    ref_value = float(np.mean(np.where(dr == 1, mu1, mu0)))
    return RuleEvaluation(
        value=value,
        regret=ref_value - value,
        accuracy=float(np.mean(d == dr)),
        value2=float(np.mean((2 * d - 1) * tau)),
    )
