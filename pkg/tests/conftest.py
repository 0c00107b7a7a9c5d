import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from itrbal.data import Dataset  # noqa: E402


def random_dataset(rng, n_s=30, n_t=20, p=2, shift=0.5):
    """Small pooled sample with a mean shift between source and target."""
    Xs = rng.normal(size=(n_s, p))
    Xt = rng.normal(loc=shift, size=(n_t, p))
    A = np.zeros(n_s, dtype=int)
    A[: n_s // 2] = 1
    rng.shuffle(A)
    Y = Xs[:, 0] + A * (0.5 + Xs[:, -1]) + 0.3 * rng.normal(size=n_s)
    X = np.vstack([Xs, Xt])
    S = np.r_[np.ones(n_s, int), np.zeros(n_t, int)]
    perm = rng.permutation(n_s + n_t)
    # keep A, Y aligned with the source order after the shuffle
    src_order = perm[S[perm] == 1]
    return Dataset(X=X[perm], S=S[perm], A=A[src_order], Y=Y[src_order])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_data(rng):
    return random_dataset(rng)
