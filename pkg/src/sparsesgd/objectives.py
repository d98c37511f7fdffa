"""Loss, sparse stochastic gradients, full gradients, and per-sample
gradient-norm bounds for the two linear classification families.

Both families restrict the regularizer to the sample's support in the
stochastic loss and gradient.  Full-range regularization would turn every
update dense, which is precisely the cost structure the sparse solvers
avoid; the price is a mild bias toward under-regularizing rare features.
The full gradient uses the same convention, so the mean of the stochastic
gradients telescopes against it exactly.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import _kernels
from .data import SparseDataset, row_nnz, row_norms

SQUARED_HINGE_L2 = "squared_hinge_l2"
LOGISTIC_L1 = "logistic_l1"
FAMILIES = (SQUARED_HINGE_L2, LOGISTIC_L1)


@dataclasses.dataclass(frozen=True)
class Objective:
    """Objective family plus its regularization factor eta.

    The squared-hinge family requires eta > 0: its gradient-norm bound
    carries a sqrt(eta) term that is undefined otherwise.
    """

    family: str
    eta: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown objective family {self.family!r}")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ValueError("eta must be finite and >= 0")
        if self.family == SQUARED_HINGE_L2 and self.eta <= 0:
            raise ValueError("squared_hinge_l2 requires eta > 0")

    @property
    def code(self) -> int:
        return _kernels.HINGE if self.family == SQUARED_HINGE_L2 else _kernels.LOGISTIC


def loss(obj: Objective, ds: SparseDataset, i: int, w: np.ndarray) -> float:
    if not 0 <= i < ds.n:
        raise IndexError(f"sample index {i} out of range [0, {ds.n})")
    return float(
        _kernels.sample_loss(
            ds.indptr, ds.indices, ds.values, w, i, float(ds.labels[i]), obj.code, obj.eta
        )
    )


def grad(obj: Objective, ds: SparseDataset, i: int, w: np.ndarray):
    """Stochastic gradient over support(x_i): returns (support indices, values)."""
    if not 0 <= i < ds.n:
        raise IndexError(f"sample index {i} out of range [0, {ds.n})")
    idx, _ = ds.row(i)
    out = np.empty(idx.size)
    _kernels.sample_grad_into(
        ds.indptr, ds.indices, ds.values, w, i, float(ds.labels[i]), obj.code, obj.eta, out
    )
    return idx, out


def full_gradient(obj: Objective, ds: SparseDataset, w: np.ndarray) -> np.ndarray:
    """Dense mean of the n stochastic gradients, accumulated in sample order
    (bitwise equal to averaging grad(obj, ds, i, w) over i).
    """
    return _kernels.full_gradient(
        ds.indptr, ds.indices, ds.values, ds.labels_f64(), w, obj.code, obj.eta
    )


def lipschitz_bound(obj: Objective, ds: SparseDataset, i: int) -> float:
    """Upper bound on the stochastic gradient norm, used as the sample's
    importance weight.
    """
    if not 0 <= i < ds.n:
        raise IndexError(f"sample index {i} out of range [0, {ds.n})")
    idx, val = ds.row(i)
    norm = float(np.sqrt(np.dot(val, val)))
    if obj.family == SQUARED_HINGE_L2:
        root = np.sqrt(obj.eta)
        return float(2.0 * (1.0 + norm / root) * norm + root)
    # logistic: smoothness constant of the data term plus the largest
    # subgradient norm the support-restricted L1 term can contribute
    return float(norm * norm / 4.0 + obj.eta * np.sqrt(idx.size))


def lipschitz_bounds(obj: Objective, ds: SparseDataset) -> np.ndarray:
    """Vectorized lipschitz_bound over every sample."""
    norms = row_norms(ds)
    if obj.family == SQUARED_HINGE_L2:
        root = np.sqrt(obj.eta)
        return 2.0 * (1.0 + norms / root) * norms + root
    return norms * norms / 4.0 + obj.eta * np.sqrt(row_nnz(ds))


__all__ = [
    "Objective",
    "FAMILIES",
    "SQUARED_HINGE_L2",
    "LOGISTIC_L1",
    "loss",
    "grad",
    "full_gradient",
    "lipschitz_bound",
    "lipschitz_bounds",
]
