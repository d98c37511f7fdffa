"""Sparse datasets in row-compressed form.

Covers LibSVM text parsing and serialization, a little-endian binary cache,
per-row geometry, a Monte-Carlo estimate of the dataset's update-conflict
potential, and the contiguous index partitions handed to worker threads.
"""

from __future__ import annotations

import dataclasses
import io
import os
import struct
from pathlib import Path

import numpy as np

from . import _kernels

CACHE_MAGIC = b"SSGD"
CACHE_VERSION = 1


class ParseError(ValueError):
    """Malformed dataset text; message carries the 1-based line number."""


class DataError(ValueError):
    """Structurally invalid dataset or dataset-level precondition failure."""


@dataclasses.dataclass
class SparseDataset:
    """CSR-style container: row i spans indices/values[indptr[i]:indptr[i+1]].

    Feature indices are 0-based uint32, strictly increasing within a row and
    < d; values are float64; labels are int8 in {-1, +1}.  Instances are
    immutable by convention and safe to share across worker threads.
    """

    n: int
    d: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    def validate(self) -> None:
        if self.n < 1:
            raise DataError("empty dataset")
        if self.indptr.shape != (self.n + 1,) or self.indptr[0] != 0:
            raise DataError("bad indptr")
        if self.labels.shape != (self.n,):
            raise DataError("labels length != n")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise DataError("labels must be -1 or +1")
        row_len = np.diff(self.indptr)
        if np.any(row_len < 1):
            raise DataError("dataset contains an empty row")
        if self.indices.size and int(self.indices.max()) >= self.d:
            raise DataError("feature index out of range")
        # strictly increasing inside each row: only row boundaries may go backwards
        if self.indices.size > 1:
            steps = np.diff(self.indices.astype(np.int64))
            boundary = np.zeros(steps.size, dtype=bool)
            inner_starts = self.indptr[1:-1]
            boundary[inner_starts - 1] = True
            if np.any(steps[~boundary] <= 0):
                raise DataError("row indices not strictly increasing")

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.indices[a:b], self.values[a:b]

    def labels_f64(self) -> np.ndarray:
        return self.labels.astype(np.float64)

    @classmethod
    def from_rows(cls, rows, labels, d: int | None = None) -> "SparseDataset":
        """Build from per-sample [(index, value), ...] lists; labels in {-1,+1}."""
        n = len(rows)
        indptr = np.zeros(n + 1, dtype=np.int64)
        for i, r in enumerate(rows):
            indptr[i + 1] = indptr[i] + len(r)
        indices = np.fromiter(
            (j for r in rows for j, _ in r), dtype=np.uint32, count=indptr[-1]
        )
        values = np.fromiter(
            (v for r in rows for _, v in r), dtype=np.float64, count=indptr[-1]
        )
        max_idx = int(indices.max()) if indices.size else -1
        if d is None:
            d = max_idx + 1
        elif d < max_idx + 1:
            raise DataError(
                f"dimension override d={d} below max feature index + 1 = {max_idx + 1}"
            )
        ds = cls(
            n=n,
            d=int(d),
            indptr=indptr,
            indices=indices,
            values=values,
            labels=np.asarray(labels, dtype=np.int8),
        )
        ds.validate()
        return ds


def _coerce_label(tok: str, lineno: int) -> int:
    try:
        y = float(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: non-numeric label {tok!r}") from None
    if y == 1.0:
        return 1
    if y == -1.0:
        return -1
    if y == 0.0:
        return -1  # {0,1} labelling convention
    raise ParseError(f"line {lineno}: label {tok!r} not in {{-1, 0, +1}}")


def parse_libsvm(source, d: int | None = None) -> SparseDataset:
    """Parse LibSVM lines ``<label> <idx>:<val> ...`` (1-based indices).

    `source` is text, bytes, an open file, or a Path.  Labels {0,1} are
    mapped to {-1,+1}; indices are converted to 0-based.  Dimensionality
    defaults to 1 + max index seen unless `d` overrides it.
    """
    if isinstance(source, Path):
        with source.open("rb") as fh:
            return parse_libsvm(fh, d=d)
    if isinstance(source, bytes):
        lines = source.decode("ascii").splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:  # file-like
        raw = source.read()
        if isinstance(raw, bytes):
            raw = raw.decode("ascii")
        lines = raw.splitlines()

    labels: list[int] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    max_idx = -1
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        toks = line.split()
        labels.append(_coerce_label(toks[0], lineno))
        if len(toks) == 1:
            raise ParseError(f"line {lineno}: sample with zero features")
        prev = -1
        for tok in toks[1:]:
            idx_s, _, val_s = tok.partition(":")
            if not val_s:
                raise ParseError(f"line {lineno}: malformed feature token {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(
                    f"line {lineno}: non-numeric feature token {tok!r}"
                ) from None
            if not np.isfinite(val):
                raise ParseError(f"line {lineno}: non-finite value in {tok!r}")
            if idx < 1:
                raise ParseError(f"line {lineno}: feature index {idx} not 1-based")
            idx -= 1
            if idx <= prev:
                raise ParseError(f"line {lineno}: non-increasing feature index {idx + 1}")
            prev = idx
            indices.append(idx)
            values.append(val)
        indptr.append(len(indices))
        if prev > max_idx:
            max_idx = prev

    if not labels:
        raise DataError("empty dataset")
    if d is None:
        d = max_idx + 1
    elif d < max_idx + 1:
        raise DataError(
            f"dimension override d={d} below max feature index + 1 = {max_idx + 1}"
        )
    ds = SparseDataset(
        n=len(labels),
        d=int(d),
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.uint32),
        values=np.asarray(values, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int8),
    )
    ds.validate()
    return ds


def load_libsvm(path, d: int | None = None) -> SparseDataset:
    return parse_libsvm(Path(path), d=d)


def write_libsvm(ds: SparseDataset, path) -> None:
    """Serialize back to LibSVM text (1-based indices, round-trip exact values)."""
    with open(path, "w", encoding="ascii") as fh:
        for i in range(ds.n):
            idx, val = ds.row(i)
            parts = ["+1" if ds.labels[i] > 0 else "-1"]
            parts.extend(f"{int(j) + 1}:{repr(float(v))}" for j, v in zip(idx, val))
            fh.write(" ".join(parts))
            fh.write("\n")


def dumps_libsvm(ds: SparseDataset) -> str:
    buf = io.StringIO()
    for i in range(ds.n):
        idx, val = ds.row(i)
        parts = ["+1" if ds.labels[i] > 0 else "-1"]
        parts.extend(f"{int(j) + 1}:{repr(float(v))}" for j, v in zip(idx, val))
        buf.write(" ".join(parts))
        buf.write("\n")
    return buf.getvalue()


_HEADER = struct.Struct("<4sIQQ")  # magic, version, n, d


def save_cache(ds: SparseDataset, path) -> None:
    """Binary cache: header, row offsets, labels, packed (index, value) pairs."""
    pair_dtype = np.dtype([("index", "<u4"), ("value", "<f8")])
    pairs = np.empty(ds.nnz, dtype=pair_dtype)
    pairs["index"] = ds.indices
    pairs["value"] = ds.values
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, ds.n, ds.d))
        fh.write(ds.indptr.astype("<i8").tobytes())
        fh.write(ds.labels.astype("<i1").tobytes())
        fh.write(pairs.tobytes())


def load_cache(path) -> SparseDataset:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DataError(f"{path}: truncated cache header")
        magic, version, n, d = _HEADER.unpack(head)
        if magic != CACHE_MAGIC:
            raise DataError(f"{path}: not a dataset cache")
        if version != CACHE_VERSION:
            raise DataError(
                f"{path}: cache version {version} != {CACHE_VERSION}, regenerate"
            )
        indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8").astype(np.int64)
        labels = np.frombuffer(fh.read(n), dtype="<i1").astype(np.int8)
        pair_dtype = np.dtype([("index", "<u4"), ("value", "<f8")])
        pairs = np.frombuffer(fh.read(), dtype=pair_dtype)
    if pairs.size != indptr[-1]:
        raise DataError(f"{path}: truncated cache body")
    ds = SparseDataset(
        n=int(n),
        d=int(d),
        indptr=indptr,
        indices=pairs["index"].astype(np.uint32),
        values=pairs["value"].astype(np.float64),
        labels=labels,
    )
    ds.validate()
    return ds


def load_dataset(path, d: int | None = None, cache: bool = False) -> SparseDataset:
    """Load LibSVM text, optionally through a sidecar binary cache."""
    path = Path(path)
    if not cache:
        return load_libsvm(path, d=d)
    sidecar = path.with_suffix(path.suffix + ".cache")
    if sidecar.exists() and sidecar.stat().st_mtime >= path.stat().st_mtime:
        try:
            return load_cache(sidecar)
        except DataError:
            pass  # stale or incompatible: fall through and rebuild
    ds = load_libsvm(path, d=d)
    save_cache(ds, sidecar)
    return ds


def row_norms(ds: SparseDataset) -> np.ndarray:
    """Euclidean norm of each row."""
    return np.sqrt(np.add.reduceat(ds.values * ds.values, ds.indptr[:-1]))


def row_nnz(ds: SparseDataset) -> np.ndarray:
    return np.diff(ds.indptr)


def estimate_conflict_degree(ds: SparseDataset, num_pairs: int, seed: int) -> float:
    """Monte-Carlo estimate of the mean number of other samples whose support
    overlaps a given sample's (the average degree of the pairwise conflict
    graph).  Samples `num_pairs` ordered pairs; passing num_pairs >=
    n*(n-1) switches to exact enumeration of all ordered pairs.
    Deterministic for a fixed seed.
    """
    if ds.n < 2:
        raise DataError("conflict degree needs at least 2 samples")
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    total_ordered = ds.n * (ds.n - 1)
    if num_pairs >= total_ordered:
        hits = _kernels.conflict_hits_exhaustive(ds.indptr, ds.indices, ds.n)
        return hits / total_ordered * (ds.n - 1)
    rng = np.random.default_rng(seed)
    ii = rng.integers(0, ds.n, size=num_pairs)
    jj = rng.integers(0, ds.n - 1, size=num_pairs)
    jj = np.where(jj >= ii, jj + 1, jj)
    hits = _kernels.conflict_hits_sampled(ds.indptr, ds.indices, ii, jj)
    return hits / num_pairs * (ds.n - 1)


@dataclasses.dataclass(frozen=True)
class Partition:
    """Half-open slice [lo, hi) of a reordered index array, owned by one worker."""

    tid: int
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo


def partition_contiguous(order: np.ndarray, num_t: int) -> list[Partition]:
    """Tile [0, len(order)) into num_t contiguous floor-division ranges."""
    n = len(order)
    if num_t < 1:
        raise ValueError("num_t must be >= 1")
    if num_t > n:
        raise DataError(f"num_t={num_t} exceeds sample count n={n}")
    return [
        Partition(tid, n * tid // num_t, n * (tid + 1) // num_t) for tid in range(num_t)
    ]


def mean_gradient_sparsity(ds: SparseDataset) -> float:
    """Mean support size over dimensionality (support-size/d)."""
    return float(np.mean(row_nnz(ds)) / ds.d)


__all__ = [
    "SparseDataset",
    "Partition",
    "ParseError",
    "DataError",
    "parse_libsvm",
    "load_libsvm",
    "write_libsvm",
    "dumps_libsvm",
    "save_cache",
    "load_cache",
    "load_dataset",
    "row_norms",
    "row_nnz",
    "estimate_conflict_degree",
    "partition_contiguous",
    "mean_gradient_sparsity",
]
