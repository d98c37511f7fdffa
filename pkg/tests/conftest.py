import numpy as np
import pytest

from sparsesgd.data import SparseDataset


def random_dataset(n, d, max_nnz, seed, value_scale=1.0):
    """Small unstructured instance: rows with 1..max_nnz random features."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        k = int(rng.integers(1, max_nnz + 1))
        idx = np.sort(rng.choice(d, size=k, replace=False))
        vals = rng.normal(scale=value_scale, size=k)
        rows.append(list(zip(idx.tolist(), vals.tolist())))
    labels = rng.choice([-1, 1], size=n)
    return SparseDataset.from_rows(rows, labels, d=d)


def densify(ds):
    """Dense matrix expansion, the brute-force view of the dataset."""
    X = np.zeros((ds.n, ds.d))
    for i in range(ds.n):
        idx, val = ds.row(i)
        X[i, idx] = val
    return X


@pytest.fixture
def small_random_dataset():
    return random_dataset(n=30, d=25, max_nnz=6, seed=42)
