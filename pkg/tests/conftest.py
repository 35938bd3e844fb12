import numpy as np
import pytest

from odselect.datasets import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def blob_dataset(rng):
    """80 gaussian points plus 8 planted far outliers, labeled."""
    normals = rng.normal(0, 1, (80, 4))
    outliers = rng.normal(8, 0.5, (8, 4))
    X = np.vstack([normals, outliers])
    y = np.r_[np.zeros(80, np.int8), np.ones(8, np.int8)]
    order = rng.permutation(88)
    return Dataset("blob", X[order], y[order])


def make_labeled(rng, n=60, p=4, n_out=6, name="synthetic"):
    normals = rng.normal(0, 1, (n - n_out, p))
    outliers = rng.uniform(4, 7, (n_out, p))
    X = np.vstack([normals, outliers])
    y = np.r_[np.zeros(n - n_out, np.int8), np.ones(n_out, np.int8)]
    order = rng.permutation(n)
    return Dataset(name, X[order], y[order])
