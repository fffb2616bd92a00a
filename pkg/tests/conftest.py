import numpy as np
import pytest

from saddlesgd import data, synthetic


@pytest.fixture
def tiny4x3():
    return synthetic.fixture_4x3()


@pytest.fixture
def tiny4x3_folded(tiny4x3):
    return data.fold_labels(tiny4x3)


@pytest.fixture
def one_by_one():
    """m=1, d=1, x=1.0, y=+1 — every quantity is hand-computable."""
    return data.from_rows([[(0, 1.0)]], [1.0], d=1)


@pytest.fixture
def small_random():
    ds = synthetic.make_sparse_classification(64, 32, 6, seed=123)
    return data.fold_labels(ds)


def random_feasible(params, rng):
    """A uniformly random (w, alpha) pair inside both clipping boxes."""
    w_lo, w_hi = params.reg.w_box
    a_lo, a_hi = params.loss.alpha_box
    w = rng.uniform(w_lo, w_hi, size=params.dataset.d)
    alpha = rng.uniform(a_lo, a_hi, size=params.dataset.m)
    return w, alpha


def dense_matrix(ds):
    """Dense copy of the design matrix, for independent re-evaluation."""
    x = np.zeros((ds.m, ds.d))
    for i in range(ds.m):
        cols, vals = ds.row(i)
        x[i, cols] = vals
    return x
