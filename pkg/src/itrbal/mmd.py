"""Squared MMD between weighted empirical distributions (V-statistic form)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, group_indices
from .kernel import KernelSpec, gram

NEG_CLAMP = 1e-10


@dataclass(frozen=True, eq=False)
class WeightedSample:
    points: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (pts.shape[0],):
            raise ValueError("mass must have one entry per point")
        if np.any(mass < 0):
            raise ValueError("masses must be nonnegative")
        if abs(mass.sum() - 1.0) > 1e-10:
            raise ValueError(f"masses sum to {mass.sum()!r}, expected 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def uniform(cls, points) -> "WeightedSample":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        m = points.shape[0]
        return cls(points, np.full(m, 1.0 / m))


def _clamp(v: float) -> float:
    if v < -NEG_CLAMP:
        raise ArithmeticError(f"squared MMD evaluated to {v!r}; kernel not positive definite?")
    return max(v, 0.0)


def mmd_from_blocks(p, q, Kpp, Kqq, Kpq) -> float:
    """Squared MMD from precomputed Gram blocks and mass vectors."""
    v = p @ Kpp @ p + q @ Kqq @ q - 2.0 * (p @ Kpq @ q)
    return _clamp(float(v))


def mmd_squared(P: WeightedSample, Q: WeightedSample, spec: KernelSpec) -> float:
    if P.points.shape[1] != Q.points.shape[1]:
        raise ValueError("dimension mismatch between samples")
    return mmd_from_blocks(
        P.mass, Q.mass,
        gram(P.points, P.points, spec),
        gram(Q.points, Q.points, spec),
        gram(P.points, Q.points, spec),
    )


def group_samples(d: Dataset, w: np.ndarray):
    """Weighted treated, weighted control and uniform target samples."""
    w = np.asarray(w, dtype=float)
    s1, s0, t = group_indices(d)
    n_s = d.n_s
    w1, w0 = w[d.A == 1], w[d.A == 0]
    P1 = WeightedSample(d.X[s1], w1 / n_s)
    P0 = WeightedSample(d.X[s0], w0 / n_s)
    PT = WeightedSample.uniform(d.X[t])
    return P1, P0, PT


def group_mmds(d: Dataset, w: np.ndarray, spec: KernelSpec):
    """``(mmd_t1, mmd_t0, mmd_10)``: treated/target, control/target, treated/control."""
    P1, P0, PT = group_samples(d, w)
    return (mmd_squared(P1, PT, spec), mmd_squared(P0, PT, spec), mmd_squared(P1, P0, spec))
