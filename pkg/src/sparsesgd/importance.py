"""Per-sample importance machinery.

Importance weights are gradient-norm upper bounds L_i.  From them this
module builds the weighted sampling distribution, constant-time weighted
samplers and pre-generated sample sequences, two scalar diagnostics (the
concentration psi and the imbalance proxy rho), the head-tail balancing
rearrangement that equalizes per-worker importance sums, and the exact
gradient-norm distribution used only as a test oracle.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .data import Partition, SparseDataset
from .objectives import Objective, grad, lipschitz_bounds

IMPORTANCE_FILE = "importance.csv"
SUMMARY_FILE = "summary.csv"
ORDER_FILE = "order.txt"


def _check_weights(L) -> np.ndarray:
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 1 or L.size == 0:
        raise ValueError("importance weights must be a non-empty 1-d vector")
    if not np.all(np.isfinite(L)) or np.any(L <= 0):
        raise ValueError("importance weights must be finite and > 0")
    return L


def sampling_distribution(L) -> np.ndarray:
    """P_i = L_i / sum(L)."""
    L = _check_weights(L)
    return L / L.sum()


def psi(L) -> float:
    """(sum L)^2 / sum(L^2), in [1, n]; small values mean concentrated
    importance, which is where weighted sampling helps most."""
    L = _check_weights(L)
    s = L.sum()
    return float(s * s / np.dot(L, L))


def rho(L) -> float:
    """Population variance of L after normalizing to mean 1.

    The raw variance would make any threshold on it scale-dependent
    (doubling all feature values crosses the gate), so the mean-normalized
    form is used: rho is the squared coefficient of variation, 0 iff all
    L_i are equal.
    """
    L = _check_weights(L)
    scaled = L / L.mean()
    return float(np.mean((scaled - 1.0) ** 2))


def importance_balance(L) -> np.ndarray:
    """Head-tail rearrangement: sort indices by L ascending, then interleave
    smallest with largest so that a contiguous split yields near-equal
    per-worker importance sums.  Ties sort by original index.
    """
    L = _check_weights(L)
    n = L.size
    sorted_idx = np.argsort(L, kind="stable")
    out = np.empty(n, dtype=np.int64)
    half = n // 2
    out[0 : 2 * half : 2] = sorted_idx[:half]
    out[1 : 2 * half : 2] = sorted_idx[n - 1 : n - 1 - half : -1]
    if n % 2:
        out[n - 1] = sorted_idx[half]
    return out


def random_order(n: int, rng: np.random.Generator) -> np.ndarray:
    """Plain shuffled ordering, the alternative to importance_balance."""
    return rng.permutation(n).astype(np.int64)


@dataclasses.dataclass(frozen=True)
class PartitionImportance:
    """Per-worker importance sums Phi_a for a given ordering and partition."""

    phi: np.ndarray

    def spread(self) -> float:
        return float(self.phi.max() - self.phi.min())


def partition_importance_sums(
    L, partitions: list[Partition], order: np.ndarray
) -> PartitionImportance:
    L = _check_weights(L)
    order = np.asarray(order)
    if order.shape != (L.size,) or not np.array_equal(
        np.sort(order), np.arange(L.size)
    ):
        raise ValueError("order must be a permutation of [0, n)")
    phi = np.array([L[order[p.lo : p.hi]].sum() for p in partitions])
    return PartitionImportance(phi=phi)


@dataclasses.dataclass(frozen=True)
class ImportanceProfile:
    """Importance weights with their distribution and diagnostics."""

    L: np.ndarray
    P: np.ndarray
    psi: float
    rho: float
    mean_L: float

    @classmethod
    def from_weights(cls, L) -> "ImportanceProfile":
        L = _check_weights(L)
        return cls(
            L=L,
            P=sampling_distribution(L),
            psi=psi(L),
            rho=rho(L),
            mean_L=float(L.mean()),
        )

    @classmethod
    def from_objective(cls, ds: SparseDataset, obj: Objective) -> "ImportanceProfile":
        return cls.from_weights(lipschitz_bounds(obj, ds))

    @property
    def n(self) -> int:
        return self.L.size


class AliasSampler:
    """Constant-time weighted sampling via Vose's alias tables."""

    def __init__(self, P):
        P = np.asarray(P, dtype=np.float64)
        if P.ndim != 1 or P.size == 0:
            raise ValueError("P must be a non-empty 1-d vector")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ValueError("P must be finite and non-negative")
        total = P.sum()
        if abs(total - 1.0) > 1e-9 or total <= 0:
            raise ValueError(f"P must sum to 1 (got {total!r})")
        n = P.size
        q = P * n
        alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if q[i] < 1.0]
        large = [i for i in range(n) if q[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            alias[s] = g
            q[g] = (q[g] + q[s]) - 1.0
            if q[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        for leftover in (small, large):
            for i in leftover:
                q[i] = 1.0
        self.q = q
        self.alias = alias
        self.n = n

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        slot = rng.integers(0, self.n, size=size)
        u = rng.random(size)
        return np.where(u < self.q[slot], slot, self.alias[slot]).astype(np.int64)

    def implied_distribution(self) -> np.ndarray:
        """Reconstruct the distribution the tables encode (for verification)."""
        impl = self.q.copy()
        np.add.at(impl, self.alias, 1.0 - self.q)
        return impl / self.n


def build_alias_sampler(P) -> AliasSampler:
    return AliasSampler(P)


def generate_sequence(sampler: AliasSampler, length: int, seed: int) -> np.ndarray:
    """Pre-generated i.i.d. sample sequence; identical (P, length, seed)
    give identical sequences on any machine or thread count."""
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    return sampler.draw(np.random.default_rng(seed), length)


def optimal_distribution_oracle(
    ds: SparseDataset, obj: Objective, w: np.ndarray
) -> np.ndarray:
    """Per-iteration optimal distribution: P*_i proportional to the exact
    gradient norm at w.  Recomputing this every step is far too expensive
    to train with; it exists to check the variance optimality of the
    gradient-norm-proportional rule in tests.
    """
    norms = np.empty(ds.n)
    for i in range(ds.n):
        _, g = grad(obj, ds, i, w)
        norms[i] = np.sqrt(np.dot(g, g))
    total = norms.sum()
    if total == 0:
        raise ValueError("all stochastic gradients are zero; distribution undefined")
    return norms / total


def save_profile(
    out_dir, profile: ImportanceProfile, order: np.ndarray, balanced: bool
) -> None:
    """Write prepare artifacts: per-sample weights, summary, and ordering.

    Weights and the ordering are written losslessly so a training run can
    be reproduced bit-for-bit from the artifacts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / IMPORTANCE_FILE).open("w", encoding="ascii") as fh:
        fh.write("index,L\n")
        for i, li in enumerate(profile.L):
            fh.write(f"{i},{repr(float(li))}\n")
    with (out / SUMMARY_FILE).open("w", encoding="ascii") as fh:
        fh.write("n,psi,rho,balanced\n")
        fh.write(
            f"{profile.n},{repr(profile.psi)},{repr(profile.rho)},{str(balanced).lower()}\n"
        )
    with (out / ORDER_FILE).open("w", encoding="ascii") as fh:
        for idx in order:
            fh.write(f"{int(idx)}\n")


def load_profile(out_dir) -> tuple[ImportanceProfile, np.ndarray, bool]:
    out = Path(out_dir)
    with (out / IMPORTANCE_FILE).open("r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "index,L":
            raise ValueError(f"{out / IMPORTANCE_FILE}: unexpected header {header!r}")
        L = np.array([float(line.split(",")[1]) for line in fh], dtype=np.float64)
    with (out / SUMMARY_FILE).open("r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "n,psi,rho,balanced":
            raise ValueError(f"{out / SUMMARY_FILE}: unexpected header {header!r}")
        n_s, _, _, balanced_s = fh.readline().strip().split(",")
    order = np.loadtxt(out / ORDER_FILE, dtype=np.int64, ndmin=1)
    profile = ImportanceProfile.from_weights(L)
    if profile.n != int(n_s) or order.size != profile.n:
        raise ValueError(f"{out}: inconsistent artifact sizes")
    return profile, order, balanced_s == "true"


__all__ = [
    "ImportanceProfile",
    "PartitionImportance",
    "AliasSampler",
    "sampling_distribution",
    "psi",
    "rho",
    "importance_balance",
    "random_order",
    "partition_importance_sums",
    "build_alias_sampler",
    "generate_sequence",
    "optimal_distribution_oracle",
    "save_profile",
    "load_profile",
]
