"""Dataset container, CSV ingestion and weight/rule value types."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np


class DataError(ValueError):
    """Raised when an input table violates the dataset contract."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Pooled source + target sample.

    ``A`` and ``Y`` are stored only for source rows, in the order in which
    source rows appear in ``X``; target rows carry no treatment or outcome.

    Attributes:
        X: ``(n, p)`` covariate matrix.
        S: length-``n`` integer vector, 1 for source rows and 0 for target.
        A: length-``n_s`` binary treatment vector over source rows.
        Y: length-``n_s`` outcome vector over source rows.
        columns: covariate names, informational only.
    """

    X: np.ndarray
    S: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    columns: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError("X must be a 2-d array")
        S = np.asarray(self.S)
        if S.shape != (X.shape[0],):
            raise DataError("S must have one entry per row of X")
        if not np.all((S == 0) | (S == 1)):
            raise DataError("S must be binary")
        S = S.astype(int)
        n_s = int(S.sum())
        A = np.asarray(self.A)
        Y = np.asarray(self.Y, dtype=float)
        if A.shape != (n_s,) or Y.shape != (n_s,):
            raise DataError(f"A and Y must have one entry per source row ({n_s})")
        if not np.all((A == 0) | (A == 1)):
            raise DataError("A must be binary")
        A = A.astype(int)
        bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
        if bad.size:
            raise DataError(f"non-finite covariate in row {bad[0]}")
        bad = np.flatnonzero(~np.isfinite(Y))
        if bad.size:
            raise DataError(f"non-finite outcome in row {self.source_rows_of(S)[bad[0]]}")
        if n_s < 2 or A.sum() == 0 or A.sum() == n_s:
            raise DataError("need at least one treated and one control source unit")
        if n_s == S.size:
            raise DataError("need at least one target row")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "S", _readonly(S))
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "Y", _readonly(Y))
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{j + 1}" for j in range(X.shape[1])))

    @staticmethod
    def source_rows_of(S):
        return np.flatnonzero(np.asarray(S) == 1)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_s(self) -> int:
        return self.A.size

    @property
    def n_t(self) -> int:
        return self.n - self.n_s

    @property
    def source_rows(self) -> np.ndarray:
        return np.flatnonzero(self.S == 1)

    @property
    def target_rows(self) -> np.ndarray:
        return np.flatnonzero(self.S == 0)

    @property
    def X_source(self) -> np.ndarray:
        return self.X[self.S == 1]

    @property
    def X_target(self) -> np.ndarray:
        return self.X[self.S == 0]

    def treatment_of_row(self, i: int) -> Optional[int]:
        """Treatment for pooled row ``i``, or ``None`` for a target row."""
        if self.S[i] == 0:
            return None
        return int(self.A[np.searchsorted(self.source_rows, i)])

    def outcome_of_row(self, i: int) -> Optional[float]:
        if self.S[i] == 0:
            return None
        return float(self.Y[np.searchsorted(self.source_rows, i)])

    @classmethod
    def from_arrays(cls, X, S, A=None, Y=None, columns=()) -> "Dataset":
        """Build from pooled-length arrays; ``A``/``Y`` entries on target rows are ignored.

        ``A`` and ``Y`` may also be given with source length directly.
        """
        S = np.asarray(S).astype(int)
        src = S == 1
        A = np.asarray(A)
        Y = np.asarray(Y, dtype=float)
        if A.shape[0] == S.shape[0]:
            A = A[src]
        if Y.shape[0] == S.shape[0]:
            Y = Y[src]
        return cls(X=X, S=S, A=A, Y=Y, columns=tuple(columns))


def group_indices(d: Dataset):
    """Pooled row indices of the treated, control and target groups."""
    src = d.source_rows
    s1 = src[d.A == 1]
    s0 = src[d.A == 0]
    return s1, s0, d.target_rows


def standardize(X: np.ndarray) -> np.ndarray:
    """Center and scale each column with its pooled mean and standard deviation."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - X.mean(axis=0)) / sd


DEFAULT_SCHEMA = {"s": "S", "a": "A", "y": "Y"}


def _parse_binary(text: str, name: str, row: int) -> int:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"row {row}: column {name!r} is not numeric ({text!r})") from None
    if v not in (0.0, 1.0):
        raise DataError(f"row {row}: column {name!r} must be 0 or 1, got {text!r}")
    return int(v)


def load_dataset(path, schema: Optional[Mapping[str, str]] = None, delimiter: str = ",") -> Dataset:
    """Read a delimited file with header into a validated :class:`Dataset`.

    ``schema`` maps ``"s"``, ``"a"``, ``"y"`` to column names; every other
    column is a covariate, kept in file order. Row numbers in error messages
    are 0-based data rows (header excluded).
    """
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update({k: v for k, v in schema.items() if v is not None})
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file") from None
        header = [h.strip() for h in header]
        for key in ("s", "a", "y"):
            if cols[key] not in header:
                raise DataError(f"missing column {cols[key]!r}")
        js, ja, jy = (header.index(cols[k]) for k in ("s", "a", "y"))
        xcols = [j for j in range(len(header)) if j not in (js, ja, jy)]
        X, S, A, Y = [], [], [], []
        for r, line in enumerate(reader):
            if not line:
                continue
            if len(line) != len(header):
                raise DataError(f"row {r}: expected {len(header)} fields, got {len(line)}")
            s = _parse_binary(line[js].strip(), cols["s"], r)
            xs = []
            for j in xcols:
                try:
                    v = float(line[j])
                except ValueError:
                    raise DataError(f"row {r}: column {header[j]!r} is not numeric ({line[j]!r})") from None
                if not math.isfinite(v):
                    raise DataError(f"row {r}: non-finite value in column {header[j]!r}")
                xs.append(v)
            X.append(xs)
            S.append(s)
            if s == 1:
                a_txt, y_txt = line[ja].strip(), line[jy].strip()
                if a_txt == "":
                    raise DataError(f"row {r}: source row with missing {cols['a']!r}")
                if y_txt == "":
                    raise DataError(f"row {r}: source row with missing {cols['y']!r}")
                A.append(_parse_binary(a_txt, cols["a"], r))
                try:
                    y = float(y_txt)
                except ValueError:
                    raise DataError(f"row {r}: column {cols['y']!r} is not numeric ({y_txt!r})") from None
                if not math.isfinite(y):
                    raise DataError(f"row {r}: non-finite value in column {cols['y']!r}")
                Y.append(y)
    X = np.array(X, dtype=float).reshape(len(S), len(xcols))
    return Dataset(X=X, S=np.array(S, dtype=int), A=np.array(A, dtype=int),
                   Y=np.array(Y, dtype=float), columns=tuple(header[j] for j in xcols))


def write_dataset(d: Dataset, path, schema: Optional[Mapping[str, str]] = None) -> None:
    """Write ``d`` as CSV; target rows get empty treatment/outcome cells.

    Floats are written with ``repr`` so that a round trip is bit-exact.
    """
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update({k: v for k, v in schema.items() if v is not None})
    src_pos = np.full(d.n, -1)
    src_pos[d.source_rows] = np.arange(d.n_s)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(d.columns) + [cols["s"], cols["a"], cols["y"]])
        for i in range(d.n):
            row = [repr(float(v)) for v in d.X[i]]
            if d.S[i] == 1:
                k = src_pos[i]
                row += ["1", str(int(d.A[k])), repr(float(d.Y[k]))]
            else:
                row += ["0", "", ""]
            w.writerow(row)


@dataclass(frozen=True, eq=False)
class WeightSolution:
    """Group-normalized weights over source rows plus diagnostics.

    ``w`` is aligned with ``Dataset.A`` (source rows in pooled order).
    """

    w: np.ndarray
    alpha: float = float("nan")
    lam: float = float("nan")
    objective: float = float("nan")
    mmd_t1: float = float("nan")
    mmd_t0: float = float("nan")
    mmd_10: float = float("nan")
    ess: float = float("nan")
    method: str = "balance"
    info: dict = field(default_factory=dict)

    def check(self, d: Dataset, rtol: float = 1e-8) -> None:
        """Assert the normalization, sign and ESS invariants against ``d``."""
        w = self.w
        if w.shape != (d.n_s,):
            raise AssertionError("weight vector length differs from n_s")
        if np.any(w < 0):
            raise AssertionError("negative weight")
        for a in (0, 1):
            tot = w[d.A == a].sum()
            if abs(tot - d.n_s) > rtol * d.n_s:
                raise AssertionError(f"group {a} weights sum to {tot}, expected {d.n_s}")
        ess = effective_sample_size(w)
        if not (0 < ess <= 2 * d.n_s * (1 + 1e-12)):
            raise AssertionError(f"ess {ess} outside (0, 2 n_s]")


def effective_sample_size(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / np.dot(w, w))


def normalize_groups(w: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Rescale each treatment group so that its weights sum to ``n_s``."""
    w = np.asarray(w, dtype=float).copy()
    n_s = w.size
    for a in (0, 1):
        m = A == a
        tot = w[m].sum()
        if not tot > 0:
            raise ValueError(f"group {a} has zero total weight")
        w[m] *= n_s / tot
    return w


@dataclass(frozen=True)
class LinearRule:
    """Treatment rule ``d(x) = 1{beta0 + x @ beta >= 0}``."""

    beta0: float
    beta: tuple

    def __post_init__(self):
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "beta", tuple(float(b) for b in np.ravel(self.beta)))

    def score(self, X: np.ndarray) -> np.ndarray:
        return self.beta0 + np.asarray(X, dtype=float) @ np.asarray(self.beta)

    def decide(self, X: np.ndarray) -> np.ndarray:
        return (self.score(X) >= 0).astype(int)

    def to_dict(self) -> dict:
        return {"beta0": self.beta0, "beta": list(self.beta)}

    @classmethod
    def from_dict(cls, obj) -> "LinearRule":
        return cls(beta0=obj["beta0"], beta=tuple(obj["beta"]))

    @classmethod
    def constant(cls, p: int, treat: bool) -> "LinearRule":
        return cls(beta0=1.0 if treat else -1.0, beta=(0.0,) * p)
