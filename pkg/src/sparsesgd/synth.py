"""Synthetic benchmark instances.

Three shapes cover the harness's needs: a linearly separable instance
(every consistent solver should drive training error to zero), a skewed
instance where a small fraction of heavy rows carries the signal (low
importance concentration, the regime where weighted sampling pays off),
and a pairwise-disjoint-support instance (conflict-free updates, used for
serializability checks).
"""

from __future__ import annotations

import numpy as np

from .data import SparseDataset


def _sparse_rows(rng: np.random.Generator, n: int, d: int, nnz: int) -> np.ndarray:
    """n sorted index rows of nnz distinct features each."""
    if nnz > d:
        raise ValueError("nnz exceeds dimensionality")
    rows = np.sort(rng.integers(0, d, size=(n, nnz)), axis=1)
    # with-replacement draws collide rarely for nnz << d; redraw those rows
    bad = np.any(np.diff(rows, axis=1) == 0, axis=1) if nnz > 1 else np.zeros(n, bool)
    while np.any(bad):
        k = int(bad.sum())
        rows[bad] = np.sort(rng.integers(0, d, size=(k, nnz)), axis=1)
        bad[bad] = np.any(np.diff(rows[bad], axis=1) == 0, axis=1)
    return rows.astype(np.uint32)


def _assemble(index_rows: np.ndarray, value_rows: np.ndarray, labels, d: int) -> SparseDataset:
    n, nnz = index_rows.shape
    ds = SparseDataset(
        n=n,
        d=d,
        indptr=np.arange(0, (n + 1) * nnz, nnz, dtype=np.int64),
        indices=index_rows.ravel(),
        values=value_rows.ravel().astype(np.float64),
        labels=np.asarray(labels, dtype=np.int8),
    )
    ds.validate()
    return ds


def separable_instance(
    n: int, d: int, nnz: int, seed: int, margin: float = 0.25
) -> SparseDataset:
    """Rows labelled by a hidden unit vector, resampled until every sample
    clears the requested margin, so zero training error is attainable."""
    rng = np.random.default_rng(seed)
    w_star = rng.normal(size=d)
    w_star /= np.linalg.norm(w_star)
    index_rows = _sparse_rows(rng, n, d, nnz)
    value_rows = rng.normal(size=(n, nnz))
    scores = np.einsum("ij,ij->i", value_rows, w_star[index_rows])
    bad = np.abs(scores) < margin
    while np.any(bad):
        k = int(bad.sum())
        index_rows[bad] = _sparse_rows(rng, k, d, nnz)
        value_rows[bad] = rng.normal(size=(k, nnz))
        scores[bad] = np.einsum("ij,ij->i", value_rows[bad], w_star[index_rows[bad]])
        bad = np.abs(scores) < margin
    labels = np.where(scores > 0, 1, -1)
    return _assemble(index_rows, value_rows, labels, d)


def skewed_instance(
    n: int,
    d: int,
    nnz: int,
    seed: int,
    heavy_frac: float = 0.1,
    light_scale: float = 0.1,
    heavy_scale: float = 3.0,
    margin: float = 0.25,
) -> SparseDataset:
    """Separable instance whose row norms are bimodal: a heavy_frac slice of
    rows is scaled up by heavy_scale and the rest down to light_scale, so
    the gradient-norm bounds concentrate on the heavy informative rows."""
    rng = np.random.default_rng(seed)
    base = separable_instance(n, d, nnz, seed=int(rng.integers(2**31)), margin=margin)
    heavy = rng.random(n) < heavy_frac
    row_scale = np.where(heavy, heavy_scale, light_scale)
    values = base.values.reshape(n, nnz) * row_scale[:, None]
    return _assemble(base.indices.reshape(n, nnz), values, base.labels, d)


def disjoint_support_instance(n: int, nnz: int, seed: int) -> SparseDataset:
    """Row i owns the feature block [i*nnz, (i+1)*nnz): supports never
    overlap, so concurrent updates commute and the conflict degree is 0."""
    rng = np.random.default_rng(seed)
    d = n * nnz
    index_rows = (
        np.arange(n, dtype=np.uint32)[:, None] * nnz
        + np.arange(nnz, dtype=np.uint32)[None, :]
    )
    value_rows = rng.normal(size=(n, nnz))
    labels = np.where(rng.random(n) < 0.5, -1, 1)
    return _assemble(index_rows, value_rows, labels, d)


__all__ = ["separable_instance", "skewed_instance", "disjoint_support_instance"]
