"""Weighted value estimate and linear-rule learning via weighted classification."""

from __future__ import annotations

import numpy as np

from .comparators import fit_logistic
from .data import Dataset, LinearRule, WeightSolution

DEFAULT_RULE_RIDGE = 1e-4


def _weights(w) -> np.ndarray:
    return np.asarray(w.w if isinstance(w, WeightSolution) else w, dtype=float)


def estimate_value(rule: LinearRule, w, data: Dataset) -> float:
    """Hajek-type estimate of the target value of ``rule``."""
    w = _weights(w)
    d = rule.decide(data.X_source)
    A, Y = data.A, data.Y
    follow = np.where(A == 1, d, 1 - d)
    return float(np.sum(w * follow * Y) / data.n_s)


def classification_view(w, data: Dataset):
    """Labels and case weights of the equivalent weighted classification problem.

    Treatment is recoded to {-1, +1}; the label is ``A~ * sign(w Y)`` and the
    case weight ``|w Y|``. Rows with ``w Y == 0`` are dropped.

    Returns:
        ``(rows, labels, case_weights)`` where ``rows`` indexes source rows.
    """
    w = _weights(w)
    wy = w * data.Y
    keep = np.flatnonzero(wy != 0)
    if keep.size == 0:
        raise ValueError("all case weights are zero")
    a_pm = 2 * data.A[keep] - 1
    labels = a_pm * np.sign(wy[keep]).astype(int)
    return keep, labels, np.abs(wy[keep])


def learn_linear_rule(w, data: Dataset, ridge: float = DEFAULT_RULE_RIDGE) -> LinearRule:
    """Fit ``1{beta0 + x'beta >= 0}`` by weighted ridge logistic regression.

    Case weights are rescaled to mean one before fitting, so the result
    does not depend on the overall scale of ``w`` or ``Y``.
    """
    rows, labels, cw = classification_view(w, data)
    X = data.X_source[rows]
    y = (labels > 0).astype(float)
    cw = cw / cw.mean()
    if np.all(y == 1) or np.all(y == 0):
        return LinearRule.constant(data.p, treat=bool(y[0] == 1))
    coef = fit_logistic(X, y, sample_weight=cw, ridge=ridge)
    return LinearRule(beta0=coef[0], beta=tuple(coef[1:]))
