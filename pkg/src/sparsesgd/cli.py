"""Command-line surface: dataset preparation, training runs, trace
comparison, and experiment sweeps.

Configs are line-oriented ``key = value`` text with ``#`` comments; every
run is reproducible from (config, seed).  Exit codes: 0 success, 1 usage
or config error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data, importance, metrics, solvers
from .data import DataError, ParseError
from .objectives import FAMILIES, Objective
from .solvers import ConfigError, SolverConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


def parse_config(path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        if value:
            out[key] = value
    return out


def _pop_typed(cfg: dict[str, str], key: str, cast, default):
    if key not in cfg:
        return default
    raw = cfg.pop(key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: bad value {raw!r}") from exc


def _as_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(raw)


def solver_config_from_dict(cfg: dict[str, str]) -> SolverConfig:
    if "algorithm" not in cfg:
        raise ConfigError("config key 'algorithm' is required")
    if "step_size" not in cfg:
        raise ConfigError("config key 'step_size' is required")
    sc = SolverConfig(
        algorithm=cfg.pop("algorithm"),
        step_size=_pop_typed(cfg, "step_size", float, None),
        epochs=_pop_typed(cfg, "epochs", int, 10),
        num_t=_pop_typed(cfg, "num_T", int, 1),
        seed=_pop_typed(cfg, "seed", int, 0),
        zeta=_pop_typed(cfg, "zeta", float, 5e-4),
        balance_mode=_pop_typed(cfg, "balance_mode", str, "auto"),
        svrg_sync_period=_pop_typed(cfg, "svrg_sync_period", int, None),
        is_weight_cap=_pop_typed(cfg, "is_weight_cap", float, None),
        sequence_mode=_pop_typed(cfg, "sequence_mode", str, "reuse_shuffle"),
        update_mode=_pop_typed(cfg, "update_mode", str, "hogwild"),
        rmse_mode=_pop_typed(cfg, "rmse", str, "per_sample"),
        timing=_pop_typed(cfg, "timing", str, "wall"),
    )
    sc.validate()
    return sc


def _objective_from_dict(cfg: dict[str, str]) -> Objective:
    family = cfg.pop("objective", None)
    if family is None:
        raise ConfigError("config key 'objective' is required")
    eta = _pop_typed(cfg, "eta", float, 0.0)
    try:
        return Objective(family=family, eta=eta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_dataset_from_dict(cfg: dict[str, str]) -> data.SparseDataset:
    path = cfg.pop("dataset", None)
    if path is None:
        raise ConfigError("config key 'dataset' is required")
    dim = _pop_typed(cfg, "dimension", int, None)
    cache = _pop_typed(cfg, "cache", _as_bool, False)
    return data.load_dataset(path, d=dim, cache=cache)


def _reject_unknown(cfg: dict[str, str]) -> None:
    if cfg:
        raise ConfigError(f"unknown config key {sorted(cfg)[0]!r}")


def _write_model(path, w: np.ndarray) -> None:
    nz = np.nonzero(w)[0]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("index,value\n")
        for j in nz:
            fh.write(f"{int(j)},{repr(float(w[j]))}\n")


def read_model(path, d: int) -> np.ndarray:
    w = np.zeros(d)
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "index,value":
            raise DataError(f"{path}: unexpected model header {header!r}")
        for row in fh:
            row = row.strip()
            if not row:
                continue
            j, v = row.split(",")
            w[int(j)] = float(v)
    return w


def cmd_prepare(args) -> int:
    ds = data.load_dataset(args.dataset, cache=args.cache)
    obj = Objective(family=args.objective, eta=args.eta)
    profile = importance.ImportanceProfile.from_objective(ds, obj)
    gate_fired = profile.rho <= args.zeta
    balanced = solvers.resolve_balance(args.balance, profile.rho, args.zeta)
    if balanced:
        order = importance.importance_balance(profile.L)
    else:
        shuffle_rng, _ = solvers.rng_streams(args.seed, 1)
        order = importance.random_order(ds.n, shuffle_rng)
    out = Path(args.out)
    importance.save_profile(out, profile, order, balanced)
    phi_tables = {}
    for num_t in _parse_int_list(args.threads):
        parts = data.partition_contiguous(order, num_t)
        phi = importance.partition_importance_sums(profile.L, parts, order)
        phi_tables[num_t] = phi.phi
        with (out / f"phi_{num_t}.csv").open("w", encoding="ascii") as fh:
            fh.write("tid,phi\n")
            for tid, val in enumerate(phi.phi):
                fh.write(f"{tid},{repr(float(val))}\n")
    print(f"dataset: n={ds.n} d={ds.d} grad_sparsity={data.mean_gradient_sparsity(ds):.3g}")
    print(f"psi={profile.psi:.6g} psi/n={profile.psi / ds.n:.6g} rho={profile.rho:.6g}")
    print(
        f"gate rho<=zeta: {'fired' if gate_fired else 'not fired'} "
        f"(zeta={args.zeta:g}); ordering: {'balanced' if balanced else 'shuffled'}"
    )
    for num_t, phi in phi_tables.items():
        print(f"phi[num_T={num_t}]: " + " ".join(f"{v:.6g}" for v in phi))
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg_dict = parse_config(args.config)
    profile_dir = cfg_dict.pop("profile_dir", None)
    out_dir = Path(args.out or cfg_dict.pop("out", "."))
    cfg_dict.pop("out", None)
    ds = _load_dataset_from_dict(cfg_dict)
    obj = _objective_from_dict(cfg_dict)
    if args.seed is not None:
        cfg_dict["seed"] = str(args.seed)
    if args.threads is not None:
        cfg_dict["num_T"] = str(args.threads)
    if args.balance is not None:
        cfg_dict["balance_mode"] = args.balance
    if args.rmse is not None:
        cfg_dict["rmse"] = args.rmse
    sc = solver_config_from_dict(cfg_dict)
    _reject_unknown(cfg_dict)

    prepared = None
    if profile_dir is not None and sc.algorithm == solvers.IS_ASGD:
        prepared = importance.load_profile(profile_dir)
    result = solvers.run(sc, ds, obj, prepared=prepared)

    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    result.trace.to_csv(trace_path)
    _write_model(out_dir / "model.csv", result.weights)
    final = result.trace.records[-1]
    print(
        f"{sc.algorithm} num_T={result.trace.num_t} seed={sc.seed}: "
        f"epochs={final.epoch} rmse={final.rmse:.6g} "
        f"best_error_rate={final.best_error_rate:.6g}"
    )
    print(f"trace written to {trace_path}")
    return EXIT_OK


def cmd_speedup(args) -> int:
    trace_a = metrics.ConvergenceTrace.from_csv(args.trace_a)
    trace_b = metrics.ConvergenceTrace.from_csv(args.trace_b)
    levels = [float(x) for x in args.levels.split(",") if x.strip()]
    slices, omitted = metrics.speedup_slices(trace_a, trace_b, levels)
    metrics.write_speedup_csv(args.out, slices)
    for s in slices:
        print(
            f"level={s.level:g} time_a={s.time_a_s:.6g}s time_b={s.time_b_s:.6g}s "
            f"speedup={s.speedup:.4g}{' (extrapolated)' if s.extrapolated else ''}"
        )
    if omitted:
        print(
            "levels unreached by at least one trace: "
            + ", ".join(f"{x:g}" for x in omitted),
            file=sys.stderr,
        )
    if not slices:
        print("no common reachable level; empty speedup table", file=sys.stderr)
    print(f"speedup table written to {args.out}")
    return EXIT_OK


def _parse_int_list(raw: str) -> list[int]:
    try:
        vals = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {raw!r}") from exc
    if not vals:
        raise ConfigError(f"empty integer list {raw!r}")
    return vals


def _parse_float_list(raw: str) -> list[float]:
    try:
        vals = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {raw!r}") from exc
    if not vals:
        raise ConfigError(f"empty number list {raw!r}")
    return vals


def cmd_sweep(args) -> int:
    cfg_dict = parse_config(args.config)
    out_dir = Path(args.out or cfg_dict.pop("out", "sweep"))
    cfg_dict.pop("out", None)
    ds = _load_dataset_from_dict(cfg_dict)
    obj = _objective_from_dict(cfg_dict)
    algorithms = [
        a.strip() for a in cfg_dict.pop("algorithms", "").split(",") if a.strip()
    ]
    if not algorithms:
        raise ConfigError("config key 'algorithms' is required for sweep")
    threads = _parse_int_list(cfg_dict.pop("num_T_values", "1"))
    step_sizes = _parse_float_list(cfg_dict.pop("step_sizes", ""))
    seeds = _parse_int_list(cfg_dict.pop("seeds", "0"))
    epochs = _pop_typed(cfg_dict, "epochs", int, 10)
    base_keys = dict(cfg_dict)
    out_dir.mkdir(parents=True, exist_ok=True)
    for alg in algorithms:
        for num_t in threads:
            for step in step_sizes:
                for seed in seeds:
                    cell = dict(base_keys)
                    cell.update(
                        algorithm=alg,
                        step_size=str(step),
                        num_T=str(num_t),
                        seed=str(seed),
                        epochs=str(epochs),
                    )
                    sc = solver_config_from_dict(cell)
                    _reject_unknown(cell)
                    result = solvers.run(sc, ds, obj)
                    name = f"{alg}_T{num_t}_lr{step:g}_s{seed}"
                    cell_dir = out_dir / name
                    cell_dir.mkdir(parents=True, exist_ok=True)
                    result.trace.to_csv(cell_dir / "trace.csv")
                    _write_model(cell_dir / "model.csv", result.weights)
                    final = result.trace.records[-1]
                    print(
                        f"{name}: rmse={final.rmse:.6g} "
                        f"best_error_rate={final.best_error_rate:.6g}"
                    )
    print(f"sweep results in {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsesgd",
        description="Sparse lock-free asynchronous SGD benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="compute importance artifacts for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--objective", required=True, choices=FAMILIES)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--zeta", type=float, default=5e-4)
    p.add_argument("--balance", choices=solvers.BALANCE_MODES, default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", default="1", help="comma list of num_T values")
    p.add_argument("--cache", action="store_true", help="use a binary dataset cache")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run one solver from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--balance", choices=solvers.BALANCE_MODES, default=None)
    p.add_argument("--rmse", choices=metrics.RMSE_MODES, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("speedup", help="slice two traces into per-level speedups")
    p.add_argument("--trace-a", required=True)
    p.add_argument("--trace-b", required=True)
    p.add_argument("--levels", required=True, help="comma list, descending")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_speedup)

    p = sub.add_parser("sweep", help="cross-product of runs from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, (ParseError, DataError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # worker panic or any other mid-run failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
