"""Convergence metrics, per-epoch traces, and error-rate speedup slicing.

A trace is the per-epoch record stream a solver emits: RMSE (per-sample
objective value treated as the error term), misclassification rate, the
best error rate reached so far, and the mean number of coordinates each
iteration wrote.  Speedup slicing compares two traces by asking, for a
ladder of error-rate levels, how much sooner one trace first reached each
level, interpolating linearly in wall-clock between epoch records.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from . import _kernels
from .data import DataError, SparseDataset
from .objectives import Objective

RMSE_PER_SAMPLE = "per_sample"
RMSE_SQRT_OBJECTIVE = "sqrt_objective"
RMSE_MODES = (RMSE_PER_SAMPLE, RMSE_SQRT_OBJECTIVE)

TRACE_COLUMNS = (
    "epoch",
    "wall_clock_s",
    "rmse",
    "error_rate",
    "best_error_rate",
    "touched_coords_per_iter",
)

SPEEDUP_COLUMNS = ("level", "time_a_s", "time_b_s", "speedup", "extrapolated")


def per_sample_losses(ds: SparseDataset, obj: Objective, w: np.ndarray) -> np.ndarray:
    return _kernels.all_losses(
        ds.indptr, ds.indices, ds.values, ds.labels_f64(), w, obj.code, obj.eta
    )


def rmse(
    ds: SparseDataset, obj: Objective, w: np.ndarray, mode: str = RMSE_PER_SAMPLE
) -> float:
    """Root mean square of the per-sample objective values (default), or the
    square root of the mean objective under mode="sqrt_objective"."""
    if mode not in RMSE_MODES:
        raise ValueError(f"unknown rmse mode {mode!r}")
    losses = per_sample_losses(ds, obj, w)
    if mode == RMSE_PER_SAMPLE:
        return float(np.sqrt(np.mean(losses * losses)))
    return float(np.sqrt(np.mean(losses)))


def error_rate(ds: SparseDataset, w: np.ndarray) -> float:
    """Fraction of samples with sign(w . x) != y; a zero margin counts as
    misclassified, so the zero model scores exactly 1.0."""
    margins = _kernels.all_margins(ds.indptr, ds.indices, ds.values, w, ds.n)
    return float(np.count_nonzero(ds.labels_f64() * margins <= 0.0) / ds.n)


@dataclasses.dataclass(frozen=True)
class TraceRecord:
    epoch: int
    wall_clock_s: float
    rmse: float
    error_rate: float
    best_error_rate: float
    touched_coords_per_iter: float


@dataclasses.dataclass
class ConvergenceTrace:
    algorithm: str
    num_t: int
    seed: int
    records: list[TraceRecord] = dataclasses.field(default_factory=list)

    def append(
        self,
        epoch: int,
        wall_clock_s: float,
        rmse_value: float,
        err: float,
        touched_coords_per_iter: float,
    ) -> TraceRecord:
        best = err if not self.records else min(err, self.records[-1].best_error_rate)
        rec = TraceRecord(epoch, wall_clock_s, rmse_value, err, best, touched_coords_per_iter)
        self.records.append(rec)
        return rec

    def validate(self) -> None:
        if not self.records:
            raise DataError("empty trace")
        prev = None
        for rec in self.records:
            if not 0.0 <= rec.error_rate <= 1.0:
                raise DataError(f"error_rate {rec.error_rate} outside [0, 1]")
            if prev is not None:
                if rec.epoch <= prev.epoch:
                    raise DataError("epochs not strictly increasing")
                if rec.wall_clock_s < prev.wall_clock_s:
                    raise DataError("wall clock decreasing")
                if rec.best_error_rate > prev.best_error_rate:
                    raise DataError("best_error_rate increasing")
            if rec.best_error_rate > rec.error_rate:
                raise DataError("best_error_rate above current error_rate")
            prev = rec

    @property
    def final_best_error_rate(self) -> float:
        return self.records[-1].best_error_rate

    @property
    def final_rmse(self) -> float:
        return self.records[-1].rmse

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"# algorithm={self.algorithm} num_T={self.num_t} seed={self.seed}\n")
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for r in self.records:
                fh.write(
                    f"{r.epoch},{repr(r.wall_clock_s)},{repr(r.rmse)},"
                    f"{repr(r.error_rate)},{repr(r.best_error_rate)},"
                    f"{repr(r.touched_coords_per_iter)}\n"
                )

    @classmethod
    def from_csv(cls, path) -> "ConvergenceTrace":
        algorithm, num_t, seed = "unknown", 0, 0
        records = []
        with open(path, "r", encoding="ascii") as fh:
            line = fh.readline()
            if line.startswith("#"):
                meta = dict(
                    kv.split("=", 1) for kv in line[1:].split() if "=" in kv
                )
                algorithm = meta.get("algorithm", algorithm)
                num_t = int(meta.get("num_T", num_t))
                seed = int(meta.get("seed", seed))
                line = fh.readline()
            header = tuple(line.strip().split(","))
            for pos, expected in enumerate(TRACE_COLUMNS):
                got = header[pos] if pos < len(header) else "<missing>"
                if got != expected:
                    raise DataError(
                        f"{path}: trace column {pos + 1} is {got!r}, expected {expected!r}"
                    )
            if len(header) > len(TRACE_COLUMNS):
                raise DataError(
                    f"{path}: unexpected trace column {header[len(TRACE_COLUMNS)]!r}"
                )
            for lineno, row in enumerate(fh, start=1):
                row = row.strip()
                if not row:
                    continue
                parts = row.split(",")
                if len(parts) != len(TRACE_COLUMNS):
                    raise DataError(f"{path}: malformed trace row {lineno}")
                records.append(
                    TraceRecord(
                        epoch=int(parts[0]),
                        wall_clock_s=float(parts[1]),
                        rmse=float(parts[2]),
                        error_rate=float(parts[3]),
                        best_error_rate=float(parts[4]),
                        touched_coords_per_iter=float(parts[5]),
                    )
                )
        trace = cls(algorithm=algorithm, num_t=num_t, seed=seed, records=records)
        trace.validate()
        return trace


def time_to_level(trace: ConvergenceTrace, level: float) -> tuple[float, bool] | None:
    """First wall-clock time at which best_error_rate <= level, linearly
    interpolated between the bracketing records.  Returns (time,
    extrapolated) or None when the trace never reaches the level;
    extrapolated means the very first record already qualified, so the
    true crossing time is only known to be <= it.
    """
    recs = trace.records
    if recs[0].best_error_rate <= level:
        return recs[0].wall_clock_s, True
    for prev, cur in zip(recs, recs[1:]):
        if cur.best_error_rate <= level:
            drop = prev.best_error_rate - cur.best_error_rate
            frac = (prev.best_error_rate - level) / drop
            return (
                prev.wall_clock_s + frac * (cur.wall_clock_s - prev.wall_clock_s),
                False,
            )
    return None


@dataclasses.dataclass(frozen=True)
class SpeedupSlice:
    level: float
    time_a_s: float
    time_b_s: float
    speedup: float
    extrapolated: bool


def speedup_slices(
    trace_a: ConvergenceTrace, trace_b: ConvergenceTrace, levels
) -> tuple[list[SpeedupSlice], list[float]]:
    """Per-level speedup of trace_a over trace_b: time_b(level)/time_a(level).

    Levels must be sorted descending.  Levels unreached by either trace are
    omitted from the slices and returned separately.  Two zero times (both
    traces start at or below the level) count as speedup 1.0.
    """
    levels = [float(x) for x in levels]
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be sorted strictly descending")
    trace_a.validate()
    trace_b.validate()
    slices: list[SpeedupSlice] = []
    omitted: list[float] = []
    for level in levels:
        ta = time_to_level(trace_a, level)
        tb = time_to_level(trace_b, level)
        if ta is None or tb is None:
            omitted.append(level)
            continue
        (time_a, ex_a), (time_b, ex_b) = ta, tb
        if time_a == 0.0 and time_b == 0.0:
            ratio = 1.0
        elif time_a == 0.0:
            ratio = float("inf")
        else:
            ratio = time_b / time_a
        slices.append(SpeedupSlice(level, time_a, time_b, ratio, ex_a or ex_b))
    return slices, omitted


def write_speedup_csv(path, slices: list[SpeedupSlice]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(SPEEDUP_COLUMNS) + "\n")
        for s in slices:
            fh.write(
                f"{repr(s.level)},{repr(s.time_a_s)},{repr(s.time_b_s)},"
                f"{repr(s.speedup)},{str(s.extrapolated).lower()}\n"
            )


def read_speedup_csv(path) -> list[SpeedupSlice]:
    out = []
    with open(path, "r", encoding="ascii") as fh:
        header = tuple(fh.readline().strip().split(","))
        if header != SPEEDUP_COLUMNS:
            raise DataError(f"{path}: unexpected speedup header {header!r}")
        for row in fh:
            row = row.strip()
            if not row:
                continue
            level, ta, tb, sp, ex = row.split(",")
            out.append(
                SpeedupSlice(float(level), float(ta), float(tb), float(sp), ex == "true")
            )
    return out


__all__ = [
    "RMSE_MODES",
    "RMSE_PER_SAMPLE",
    "RMSE_SQRT_OBJECTIVE",
    "TRACE_COLUMNS",
    "TraceRecord",
    "ConvergenceTrace",
    "SpeedupSlice",
    "per_sample_losses",
    "rmse",
    "error_rate",
    "time_to_level",
    "speedup_slices",
    "write_speedup_csv",
    "read_speedup_csv",
]
