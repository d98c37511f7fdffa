"""The four training loops over a shared lock-free model.

All solvers share one structure: an index ordering is fixed up front, each
worker owns a contiguous slice of it, per-epoch sample sequences are
pre-generated from per-thread random streams, and the workers then run a
compiled GIL-free kernel that updates the shared weight vector coordinate
by coordinate with no locks.  Stale reads and lost updates between
conflicting writers are accepted by design; an epoch barrier (thread join)
is the only synchronization, and metrics are computed on a copy of the
weights taken there.

Randomness: a run's seed feeds a SeedSequence whose child 0 drives the
global shuffle and child 1+tid drives thread tid, so growing the thread
count never reseeds existing streams.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import threading
import time

import numpy as np

from . import _kernels
from .data import Partition, SparseDataset, partition_contiguous
from .importance import (
    AliasSampler,
    ImportanceProfile,
    importance_balance,
    random_order,
)
from .metrics import RMSE_MODES, ConvergenceTrace, error_rate, rmse
from .objectives import Objective

log = logging.getLogger(__name__)

SGD = "sgd"
ASGD = "asgd"
IS_ASGD = "is-asgd"
SVRG_ASGD = "svrg-asgd"
ALGORITHMS = (SGD, ASGD, IS_ASGD, SVRG_ASGD)

BALANCE_MODES = ("auto", "always", "never")
SEQUENCE_MODES = ("reuse_shuffle", "regenerate")
UPDATE_MODES = ("hogwild", "locked")
TIMING_MODES = ("wall", "logical")


class ConfigError(ValueError):
    """Invalid solver or experiment configuration."""


class SharedModel:
    """Dense weight vector shared by all workers.

    Coordinates are aligned float64 slots: concurrent writers can overwrite
    each other (classic lock-free behaviour) but a read never observes a
    torn value, and no lock is held anywhere in the update path.
    """

    def __init__(self, d: int):
        self.w = np.zeros(d)

    @property
    def d(self) -> int:
        return self.w.size

    def snapshot(self) -> np.ndarray:
        return self.w.copy()


@dataclasses.dataclass
class SolverConfig:
    """Algorithm choice and every knob a run depends on.

    num_T is the concurrency (and the stand-in for the update-delay level);
    zeta gates the importance-balancing rearrangement; svrg_sync_period is
    in global iterations (None means one full pass); is_weight_cap bounds
    the importance correction factor.  sequence_mode controls whether the
    weighted sample sequences are regenerated each epoch or generated once
    and reshuffled (the cheap approximation, default).  update_mode
    "locked" swaps the lock-free kernel for a mutex-guarded pure-Python
    reference path, for experiments on update-loss sensitivity.
    """

    algorithm: str
    step_size: float
    epochs: int = 10
    num_t: int = 1
    seed: int = 0
    zeta: float = 5e-4
    balance_mode: str = "auto"
    svrg_sync_period: int | None = None
    is_weight_cap: float | None = None
    sequence_mode: str = "reuse_shuffle"
    update_mode: str = "hogwild"
    rmse_mode: str = "per_sample"
    timing: str = "wall"
    record_sequences: bool = False
    record_snapshots: bool = False

    def validate(self, n: int | None = None) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not np.isfinite(self.step_size) or self.step_size <= 0:
            raise ConfigError("step_size must be finite and > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.num_t < 1:
            raise ConfigError("num_T must be >= 1")
        hw = os.cpu_count() or 1
        if self.num_t > hw:
            log.warning("num_T=%d exceeds hardware parallelism %d", self.num_t, hw)
        if n is not None and self.num_t > n:
            raise ConfigError(f"num_T={self.num_t} exceeds sample count n={n}")
        if not np.isfinite(self.zeta) or self.zeta < 0:
            raise ConfigError("zeta must be finite and >= 0")
        if self.balance_mode not in BALANCE_MODES:
            raise ConfigError(f"balance_mode must be one of {BALANCE_MODES}")
        if self.svrg_sync_period is not None and self.svrg_sync_period < 1:
            raise ConfigError("svrg_sync_period must be >= 1")
        if self.is_weight_cap is not None and not self.is_weight_cap > 0:
            raise ConfigError("is_weight_cap must be > 0")
        if self.sequence_mode not in SEQUENCE_MODES:
            raise ConfigError(f"sequence_mode must be one of {SEQUENCE_MODES}")
        if self.update_mode not in UPDATE_MODES:
            raise ConfigError(f"update_mode must be one of {UPDATE_MODES}")
        if self.update_mode == "locked" and self.algorithm == SVRG_ASGD:
            raise ConfigError("update_mode=locked is not supported for svrg-asgd")
        if self.rmse_mode not in RMSE_MODES:
            raise ConfigError(f"rmse must be one of {RMSE_MODES}")
        if self.timing not in TIMING_MODES:
            raise ConfigError(f"timing must be one of {TIMING_MODES}")


@dataclasses.dataclass
class SvrgState:
    """Snapshot weights and the dense full gradient taken at them."""

    s: np.ndarray
    mu_snapshot: np.ndarray


@dataclasses.dataclass
class SolverResult:
    """A finished run: the per-epoch trace plus the trained weights and
    whatever per-run structure the tests and the CLI need to persist."""

    trace: ConvergenceTrace
    weights: np.ndarray
    order: np.ndarray | None = None
    balanced: bool | None = None
    profile: ImportanceProfile | None = None
    local_distributions: list[np.ndarray] | None = None
    sequences: list[list[tuple[np.ndarray, np.ndarray]]] | None = None
    svrg_states: list[SvrgState] | None = None


def rng_streams(seed: int, num_t: int):
    children = np.random.SeedSequence(seed).spawn(num_t + 1)
    shuffle_rng = np.random.Generator(np.random.PCG64(children[0]))
    thread_rngs = [np.random.Generator(np.random.PCG64(c)) for c in children[1:]]
    return shuffle_rng, thread_rngs


def _run_workers(tasks) -> None:
    """Run the per-thread callables, serially when there is only one.

    A worker exception aborts the run: it is re-raised in the caller after
    all threads have stopped.
    """
    if len(tasks) == 1:
        tasks[0]()
        return
    failures: list[BaseException] = []

    def trampoline(fn):
        try:
            fn()
        except BaseException as exc:  # propagate panics to the main thread
            failures.append(exc)

    threads = [threading.Thread(target=trampoline, args=(fn,)) for fn in tasks]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise RuntimeError("worker thread failed") from failures[0]


def _python_sparse_epoch(ds, y, w, ids, seq, scale, step, eta, obj_code, lock):
    """Reference update loop, mirroring the compiled kernel op for op.

    Used by update_mode="locked": the lock makes every read-modify-write
    atomic, so no update is ever lost (unlike the lock-free default).
    """
    indptr, indices, values = ds.indptr, ds.indices, ds.values
    touched = 0
    for k in range(seq.size):
        j = seq[k]
        i = ids[j]
        a, b = indptr[i], indptr[i + 1]
        with lock:
            m = 0.0
            for p in range(a, b):
                m += values[p] * w[indices[p]]
            yi = y[i]
            c = step * scale[j]
            if obj_code == _kernels.HINGE:
                z = 1.0 - yi * m
                g = -2.0 * z * yi if z > 0.0 else 0.0
                for p in range(a, b):
                    jj = indices[p]
                    w[jj] -= c * (g * values[p] + eta * w[jj])
            else:
                s = 1.0 / (1.0 + np.exp(yi * m))
                g = -yi * s
                for p in range(a, b):
                    jj = indices[p]
                    wj = w[jj]
                    sub = eta if wj > 0.0 else (-eta if wj < 0.0 else 0.0)
                    w[jj] -= c * (g * values[p] + sub)
        touched += b - a
    return touched


def resolve_balance(balance_mode: str, rho_value: float, zeta: float) -> bool:
    if balance_mode == "always":
        return True
    if balance_mode == "never":
        return False
    return rho_value <= zeta


def _effective_threads(cfg: SolverConfig) -> int:
    if cfg.algorithm == SGD:
        if cfg.num_t != 1:
            log.info("sgd is serial; ignoring num_T=%d", cfg.num_t)
        return 1
    return cfg.num_t


def _now(cfg: SolverConfig, t0: float, epoch: int) -> float:
    if cfg.timing == "logical":
        return float(epoch)
    return time.perf_counter() - t0


def _run_sparse(
    cfg: SolverConfig,
    ds: SparseDataset,
    obj: Objective,
    prepared: tuple[ImportanceProfile, np.ndarray, bool] | None = None,
) -> SolverResult:
    cfg.validate(ds.n)
    num_t = _effective_threads(cfg)
    y = ds.labels_f64()
    shuffle_rng, thread_rngs = rng_streams(cfg.seed, num_t)

    profile = None
    balanced = None
    if cfg.algorithm == SGD:
        order = np.arange(ds.n, dtype=np.int64)
    elif cfg.algorithm == ASGD:
        order = random_order(ds.n, shuffle_rng)
    else:  # is-asgd
        if prepared is not None:
            profile, order, balanced = prepared
            if profile.n != ds.n:
                raise ConfigError("prepared profile size does not match dataset")
        else:
            profile = ImportanceProfile.from_objective(ds, obj)
            balanced = resolve_balance(cfg.balance_mode, profile.rho, cfg.zeta)
            order = (
                importance_balance(profile.L)
                if balanced
                else random_order(ds.n, shuffle_rng)
            )

    partitions = partition_contiguous(order, num_t)
    ids = [order[p.lo : p.hi] for p in partitions]
    local_dists = None
    samplers = None
    if cfg.algorithm == IS_ASGD:
        scales = []
        local_dists = []
        samplers = []
        for t in range(num_t):
            l_local = profile.L[ids[t]]
            p_local = l_local / l_local.sum()
            local_dists.append(p_local)
            samplers.append(AliasSampler(p_local))
            s = l_local.mean() / l_local
            if cfg.is_weight_cap is not None:
                s = np.minimum(s, cfg.is_weight_cap)
            scales.append(s)
    else:
        scales = [np.ones(p.size) for p in partitions]

    model = SharedModel(ds.d)
    trace = ConvergenceTrace(cfg.algorithm, num_t, cfg.seed)
    w0 = model.snapshot()
    trace.append(0, 0.0, rmse(ds, obj, w0, cfg.rmse_mode), error_rate(ds, w0), 0.0)

    sequences = [] if cfg.record_sequences else None
    lock = threading.Lock() if cfg.update_mode == "locked" else None
    seqs: list[np.ndarray | None] = [None] * num_t
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        for t in range(num_t):
            size = partitions[t].size
            if cfg.algorithm == IS_ASGD:
                if cfg.sequence_mode == "reuse_shuffle" and seqs[t] is not None:
                    thread_rngs[t].shuffle(seqs[t])
                else:
                    seqs[t] = samplers[t].draw(thread_rngs[t], size)
            else:
                seqs[t] = thread_rngs[t].integers(0, size, size=size).astype(np.int64)
        if sequences is not None:
            sequences.append(
                [(ids[t][seqs[t]], scales[t][seqs[t]]) for t in range(num_t)]
            )

        touched = [0] * num_t
        if lock is None:
            def task(t):
                touched[t] = _kernels.sparse_epoch(
                    ds.indptr, ds.indices, ds.values, y, model.w,
                    ids[t], seqs[t], scales[t], cfg.step_size, obj.eta, obj.code,
                )
        else:
            def task(t):
                touched[t] = _python_sparse_epoch(
                    ds, y, model.w, ids[t], seqs[t], scales[t],
                    cfg.step_size, obj.eta, obj.code, lock,
                )
        _run_workers([lambda t=t: task(t) for t in range(num_t)])

        wall = _now(cfg, t0, epoch)
        w = model.snapshot()
        trace.append(
            epoch, wall, rmse(ds, obj, w, cfg.rmse_mode), error_rate(ds, w),
            sum(touched) / ds.n,
        )
    trace.validate()
    return SolverResult(
        trace=trace,
        weights=model.w,
        order=order,
        balanced=balanced,
        profile=profile,
        local_distributions=local_dists,
        sequences=sequences,
    )


def _parallel_full_gradient(ds, y, w, obj: Objective, num_t: int) -> np.ndarray:
    """Mean stochastic gradient at w, reduced over num_t contiguous sample
    ranges; partial sums are combined in thread order, so the result is
    deterministic for a fixed num_t and exact at num_t=1."""
    bounds = [ds.n * t // num_t for t in range(num_t + 1)]
    parts = [np.zeros(ds.d) for _ in range(num_t)]

    def task(t):
        _kernels.grad_sum_range(
            ds.indptr, ds.indices, ds.values, y, w, obj.code, obj.eta,
            bounds[t], bounds[t + 1], parts[t],
        )

    _run_workers([lambda t=t: task(t) for t in range(num_t)])
    total = parts[0]
    for p in parts[1:]:
        total += p
    return total / ds.n


def _run_svrg(cfg: SolverConfig, ds: SparseDataset, obj: Objective) -> SolverResult:
    cfg.validate(ds.n)
    num_t = cfg.num_t
    y = ds.labels_f64()
    shuffle_rng, thread_rngs = rng_streams(cfg.seed, num_t)
    order = random_order(ds.n, shuffle_rng)
    partitions = partition_contiguous(order, num_t)
    ids = [order[p.lo : p.hi] for p in partitions]

    period = cfg.svrg_sync_period or ds.n
    model = SharedModel(ds.d)
    trace = ConvergenceTrace(cfg.algorithm, num_t, cfg.seed)
    w0 = model.snapshot()
    trace.append(0, 0.0, rmse(ds, obj, w0, cfg.rmse_mode), error_rate(ds, w0), 0.0)

    states: list[SvrgState] = []
    sequences = [] if cfg.record_sequences else None
    snap = np.zeros(ds.d)
    mu = np.zeros(ds.d)
    g_iter = 0
    next_sync = 0
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        pos = 0
        touched_epoch = 0
        epoch_seqs: list[tuple[np.ndarray, np.ndarray]] = []
        while pos < ds.n:
            if g_iter == next_sync:
                # rendezvous: all workers are parked between segments
                snap = model.snapshot()
                mu = _parallel_full_gradient(ds, y, snap, obj, num_t)
                if cfg.record_snapshots:
                    states.append(SvrgState(s=snap, mu_snapshot=mu.copy()))
                next_sync += period
            seg = min(next_sync - g_iter, ds.n - pos)
            shares = [seg * t // num_t for t in range(num_t + 1)]
            seqs = []
            for t in range(num_t):
                size = shares[t + 1] - shares[t]
                seqs.append(
                    thread_rngs[t].integers(0, max(partitions[t].size, 1), size=size).astype(np.int64)
                )
            if sequences is not None:
                epoch_seqs.extend(
                    (ids[t][seqs[t]], np.ones(seqs[t].size)) for t in range(num_t)
                )
            touched = [0] * num_t

            def task(t):
                touched[t] = _kernels.svrg_epoch(
                    ds.indptr, ds.indices, ds.values, y, model.w, snap, mu,
                    ids[t], seqs[t], cfg.step_size, obj.eta, obj.code,
                )

            _run_workers([lambda t=t: task(t) for t in range(num_t)])
            touched_epoch += sum(touched)
            g_iter += seg
            pos += seg

        wall = _now(cfg, t0, epoch)
        w = model.snapshot()
        trace.append(
            epoch, wall, rmse(ds, obj, w, cfg.rmse_mode), error_rate(ds, w),
            touched_epoch / ds.n,
        )
        if sequences is not None:
            sequences.append(epoch_seqs)
    trace.validate()
    return SolverResult(
        trace=trace,
        weights=model.w,
        order=order,
        svrg_states=states if cfg.record_snapshots else None,
        sequences=sequences,
    )


def run_sgd(cfg: SolverConfig, ds: SparseDataset, obj: Objective) -> SolverResult:
    if cfg.algorithm != SGD:
        raise ConfigError(f"run_sgd called with algorithm {cfg.algorithm!r}")
    return _run_sparse(cfg, ds, obj)


def run_asgd(cfg: SolverConfig, ds: SparseDataset, obj: Objective) -> SolverResult:
    if cfg.algorithm != ASGD:
        raise ConfigError(f"run_asgd called with algorithm {cfg.algorithm!r}")
    return _run_sparse(cfg, ds, obj)


def run_is_asgd(
    cfg: SolverConfig,
    ds: SparseDataset,
    obj: Objective,
    prepared: tuple[ImportanceProfile, np.ndarray, bool] | None = None,
) -> SolverResult:
    if cfg.algorithm != IS_ASGD:
        raise ConfigError(f"run_is_asgd called with algorithm {cfg.algorithm!r}")
    return _run_sparse(cfg, ds, obj, prepared=prepared)


def run_svrg_asgd(cfg: SolverConfig, ds: SparseDataset, obj: Objective) -> SolverResult:
    if cfg.algorithm != SVRG_ASGD:
        raise ConfigError(f"run_svrg_asgd called with algorithm {cfg.algorithm!r}")
    return _run_svrg(cfg, ds, obj)


def run(
    cfg: SolverConfig,
    ds: SparseDataset,
    obj: Objective,
    prepared: tuple[ImportanceProfile, np.ndarray, bool] | None = None,
) -> SolverResult:
    """Dispatch to the configured algorithm."""
    if cfg.algorithm == SGD:
        return run_sgd(cfg, ds, obj)
    if cfg.algorithm == ASGD:
        return run_asgd(cfg, ds, obj)
    if cfg.algorithm == IS_ASGD:
        return run_is_asgd(cfg, ds, obj, prepared=prepared)
    if cfg.algorithm == SVRG_ASGD:
        return run_svrg_asgd(cfg, ds, obj)
    raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")


__all__ = [
    "ALGORITHMS",
    "SGD",
    "ASGD",
    "IS_ASGD",
    "SVRG_ASGD",
    "ConfigError",
    "SharedModel",
    "SolverConfig",
    "SvrgState",
    "SolverResult",
    "run",
    "run_sgd",
    "run_asgd",
    "run_is_asgd",
    "run_svrg_asgd",
]
