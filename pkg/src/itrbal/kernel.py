"""Gaussian kernel, Gram matrices and the median-heuristic bandwidth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

FAMILIES = ("gaussian",)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth.

    The Gaussian kernel is ``exp(-|x - x'|^2 / (2 bandwidth^2))``.
    """

    bandwidth: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError("bandwidth must be positive and finite")


def median_heuristic(X: np.ndarray) -> float:
    """Median Euclidean distance over distinct pairs ``i < j``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("median heuristic needs at least two rows")
    d = pdist(X)
    if not np.any(d > 0):
        raise ValueError("degenerate covariates: all pairwise distances are zero")
    med = float(np.median(d))
    if med <= 0:
        # More than half the pairs coincide; fall back to the positive distances.
        med = float(np.median(d[d > 0]))
    return med


def gram(XA: np.ndarray, XB: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix with entry ``(i, j) = K(XA[i], XB[j])``."""
    XA = np.atleast_2d(np.asarray(XA, dtype=float))
    XB = np.atleast_2d(np.asarray(XB, dtype=float))
    if XA.shape[1] != XB.shape[1]:
        raise ValueError(f"dimension mismatch: {XA.shape[1]} vs {XB.shape[1]} columns")
    sq = cdist(XA, XB, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.bandwidth ** 2))


def pooled_spec(X: np.ndarray) -> KernelSpec:
    """Gaussian kernel whose bandwidth is the median heuristic on ``X``."""
    return KernelSpec(bandwidth=median_heuristic(X))
