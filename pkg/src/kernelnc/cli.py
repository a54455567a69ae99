"""Command line front end: estimate, simulate, and tune subcommands.

Configuration lives in one YAML document; a handful of flags override
file values (precedence: built-in defaults, then the config file or a
manifest's embedded config, then flags). Every run writes a manifest
holding the fully resolved configuration, so any run can be repeated
exactly with --from-manifest.

Exit codes: 0 success, 1 runtime or numerical failure, 2 configuration
or ingestion failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .data import (
    Dataset,
    Schema,
    format_float,
    ingest,
    population_from_csv,
    write_table_csv,
)
from .effects import (
    EFFECT_KINDS,
    ESTIMATORS,
    EffectRequest,
    TuningPlan,
    run_end_to_end,
    tuning_reports,
)
from .errors import ConfigError, IngestError, InputError, KernelncError
from .simlab import DESIGN_KINDS, SimDesign, generate, run_experiment

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

MANIFEST_NAME = "manifest.json"

_DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "workers": None,
    "data": {
        "path": None,
        "roles": {"y": None, "d": None, "x": [], "z": [], "w": [], "v": []},
        "categorical": [],
        "simulate": None,
    },
    "estimate": {
        "estimator": "nc",
        "effect": "ate",
        "grid": None,
        "grid_size": 100,
        "d_value": None,
        "v_value": None,
        "alt_population": None,
    },
    "tuning": {
        "mode": "loocv",
        "lam": None,
        "xi": None,
        "lam1": None,
        "lam2": None,
        "c0": 2.0,
        "c": 2.0,
        "c1": 2.0,
        "c2": 2.0,
        "grid": None,
    },
    "kernels": {"lengthscales": {}},
    "simulate": {
        "design": "quadratic",
        "n": 1000,
        "dim_x": 5,
        "dim_z": 1,
        "dim_w": 1,
        "replicates": 100,
        "estimators": ["nc", "te"],
        "strict": True,
    },
}

_SIM_KEYS = ("design", "n", "dim_x", "dim_z", "dim_w")


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _load_yaml(path: Path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed YAML in {path}: {err}") from err
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a mapping at top level")
    return doc


def _load_manifest_config(path: Path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read manifest {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed manifest {path}: {err}") from err
    if not isinstance(doc, dict) or not isinstance(doc.get("config"), dict):
        raise ConfigError(f"manifest {path} has no embedded config")
    return doc["config"]


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, file or manifest values, and flag overrides."""
    if args.config and args.from_manifest:
        raise ConfigError("pass either --config or --from-manifest, not both")
    cfg = json.loads(json.dumps(_DEFAULTS))
    if args.config:
        cfg = _deep_merge(cfg, _load_yaml(Path(args.config)))
    if args.from_manifest:
        cfg = _deep_merge(cfg, _load_manifest_config(Path(args.from_manifest)))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.output_dir is not None:
        cfg["output_dir"] = args.output_dir
    if args.workers is not None:
        cfg["workers"] = args.workers
    if getattr(args, "replicates", None) is not None:
        cfg["simulate"]["replicates"] = args.replicates
    if getattr(args, "data_path", None) is not None:
        cfg["data"]["path"] = args.data_path
    return cfg


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _as_config_error(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except InputError as err:
        raise ConfigError(str(err)) from err


def _build_tuning(cfg: dict) -> TuningPlan:
    t = cfg["tuning"]
    grid = t["grid"]
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
    return _as_config_error(
        TuningPlan,
        mode=t["mode"],
        lam=t["lam"],
        xi=t["xi"],
        lam1=t["lam1"],
        lam2=t["lam2"],
        c0=float(t["c0"]),
        c=float(t["c"]),
        c1=float(t["c1"]),
        c2=float(t["c2"]),
        grid=grid,
    )


def _check_forced(cfg: dict) -> None:
    t = cfg["tuning"]
    if t["mode"] == "forced":
        for name in ("lam", "xi", "lam1", "lam2"):
            value = t[name]
            _require(
                value is None or float(value) > 0.0,
                f"forced penalty {name} must be > 0, got {value}",
            )


def _build_design(sim: dict) -> SimDesign:
    _require(sim["design"] in DESIGN_KINDS, f"unknown design {sim['design']!r}")
    return _as_config_error(
        SimDesign,
        kind=sim["design"],
        n=int(sim["n"]),
        dim_x=int(sim["dim_x"]),
        dim_z=int(sim["dim_z"]),
        dim_w=int(sim["dim_w"]),
    )


def _build_schema(data_cfg: dict) -> Schema:
    roles = data_cfg["roles"]
    for role in ("y", "d"):
        _require(bool(roles.get(role)), f"data.roles.{role} is required")
    for role in ("x", "z", "w"):
        _require(bool(roles.get(role)), f"data.roles.{role} needs at least one column")
    return Schema(
        y=str(roles["y"]),
        d=str(roles["d"]),
        x=tuple(roles["x"]),
        z=tuple(roles["z"]),
        w=tuple(roles["w"]),
        v=tuple(roles.get("v") or ()),
        categorical=frozenset(data_cfg["categorical"]),
    )


def load_dataset(cfg: dict) -> Dataset:
    """Materialize the dataset named by the config.

    Either a CSV path with a role schema, or an inline simulation
    design drawn from the run seed.
    """
    data_cfg = cfg["data"]
    if data_cfg["path"] is not None and data_cfg["simulate"] is not None:
        raise ConfigError("data.path and data.simulate are mutually exclusive")
    if data_cfg["path"] is not None:
        return ingest(data_cfg["path"], _build_schema(data_cfg))
    if data_cfg["simulate"] is not None:
        sim = dict(data_cfg["simulate"])
        replicate = int(sim.pop("replicate", 0))
        unknown = set(sim).difference(_SIM_KEYS)
        _require(not unknown, f"unknown data.simulate keys {sorted(unknown)}")
        merged = {**cfg["simulate"], **sim}
        return generate(_build_design(merged), int(cfg["seed"]), replicate)
    raise ConfigError("set data.path (CSV) or data.simulate (synthetic draw)")


def _build_request(cfg: dict) -> EffectRequest:
    est = cfg["estimate"]
    kind = est["effect"]
    _require(kind in EFFECT_KINDS, f"unknown effect {kind!r}")
    _require(est["estimator"] in ESTIMATORS, f"unknown estimator {est['estimator']!r}")
    if est["estimator"] == "te":
        _require(kind == "ate", "estimator 'te' only supports effect 'ate'")
    grid = est["grid"]
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
    alt_x = alt_w = alt_v = None
    if kind == "ds":
        alt = est["alt_population"]
        _require(
            isinstance(alt, dict) and alt.get("path"),
            "effect 'ds' needs estimate.alt_population with a path and columns",
        )
        columns = {role: tuple(alt.get(role) or ()) for role in ("x", "w", "v")}
        blocks = population_from_csv(alt["path"], columns)
        alt_x, alt_w = blocks["x"], blocks["w"]
        alt_v = blocks.get("v")
    v_value = est["v_value"]
    if v_value is not None:
        v_value = np.atleast_1d(np.asarray(v_value, dtype=float))
    return _as_config_error(
        EffectRequest,
        kind=kind,
        grid=grid,
        grid_size=int(est["grid_size"]),
        alt_x=alt_x,
        alt_w=alt_w,
        alt_v=alt_v,
        d_value=est["d_value"],
        v_value=v_value,
    )


def _lengthscales(cfg: dict) -> dict[str, float]:
    raw = cfg["kernels"]["lengthscales"]
    _require(isinstance(raw, dict), "kernels.lengthscales must be a mapping")
    out = {}
    for name, value in raw.items():
        value = float(value)
        _require(value > 0, f"lengthscale for {name!r} must be > 0")
        out[str(name)] = value
    return out


def _prepare_outdir(cfg: dict) -> Path:
    outdir = Path(cfg["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _write_manifest(outdir, command, cfg, outputs, timings, results) -> Path:
    manifest = {
        "command": command,
        "config": cfg,
        "outputs": outputs,
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "results": results,
    }
    path = outdir / MANIFEST_NAME
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_estimate(cfg: dict) -> int:
    _check_forced(cfg)
    tuning = _build_tuning(cfg)
    request = _build_request(cfg)
    lengthscales = _lengthscales(cfg)
    outdir = _prepare_outdir(cfg)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    data = load_dataset(cfg)
    timings["load_data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    curve = run_end_to_end(
        data, request, tuning, cfg["estimate"]["estimator"], lengthscales
    )
    timings["estimate"] = time.perf_counter() - t0

    meta = curve.metadata
    rows = [
        (
            float(d),
            float(v),
            meta["estimator"],
            meta["n"],
            meta["m"],
            meta["lam"],
            meta["xi"],
            meta["extra_penalty"],
            meta["lengthscale_digest"],
        )
        for d, v in zip(curve.grid, curve.values)
    ]
    curve_path = outdir / "curve.csv"
    write_table_csv(
        curve_path,
        ["d", "estimate", "estimator", "n", "m", "lambda", "xi",
         "extra_penalty", "lengthscale_digest"],
        rows,
    )
    results = {
        "effect": meta["effect"],
        "estimator": meta["estimator"],
        "n": meta["n"],
        "m": meta["m"],
        "lambda": meta["lam"],
        "xi": meta["xi"],
        "extra_penalty": meta["extra_penalty"],
        "tuning_mode": meta["tuning_mode"],
        "lengthscale_digest": meta["lengthscale_digest"],
        "grid_points": int(curve.grid.size),
    }
    _write_manifest(outdir, "estimate", cfg, [curve_path.name], timings, results)
    print(f"wrote {curve_path} ({curve.grid.size} grid points)")
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    _check_forced(cfg)
    tuning = _build_tuning(cfg)
    sim = cfg["simulate"]
    design = _build_design(sim)
    estimators = list(sim["estimators"])
    for est in estimators:
        _require(est in ESTIMATORS, f"unknown estimator {est!r}")
    replicates = int(sim["replicates"])
    _require(replicates >= 1, "simulate.replicates must be >= 1")
    outdir = _prepare_outdir(cfg)

    t0 = time.perf_counter()
    reports = run_experiment(
        design,
        replicates,
        int(cfg["seed"]),
        estimators,
        tuning,
        workers=cfg["workers"],
        strict=bool(sim["strict"]),
    )
    timings = {"experiment": time.perf_counter() - t0}

    rep_rows = []
    agg_rows = []
    for est in estimators:
        rep = reports[est]
        rep_rows.extend(
            (est, int(r), float(v)) for r, v in zip(rep.replicates, rep.values)
        )
        rep_rows.append((est, "mean", rep.mean))
        rep_rows.append((est, "sd", rep.sd))
        rep_rows.append((est, "mse", rep.mse))
        agg_rows.append(
            (est, design.n, int(rep.values.size), rep.mean, rep.sd, rep.mse)
        )
    rep_path = outdir / "replicates.csv"
    write_table_csv(rep_path, ["estimator", "replicate", "value"], rep_rows)
    agg_path = outdir / "aggregate.csv"
    write_table_csv(
        agg_path, ["estimator", "n", "replicates", "mean", "sd", "mse"], agg_rows
    )

    results = {
        est: {
            "mean": reports[est].mean,
            "sd": reports[est].sd,
            "mse": reports[est].mse,
            "failed_replicates": [list(f) for f in reports[est].failures],
        }
        for est in estimators
    }
    results["metadata"] = reports[estimators[0]].metadata
    _write_manifest(
        outdir, "simulate", cfg, [rep_path.name, agg_path.name], timings, results
    )
    for est in estimators:
        rep = reports[est]
        print(
            f"{est}: mean={format_float(rep.mean)} sd={format_float(rep.sd)} "
            f"mse={format_float(rep.mse)} ({rep.values.size} replicates)"
        )
    print(f"wrote {rep_path} and {agg_path}")
    return EXIT_OK


def cmd_tune(cfg: dict) -> int:
    est_name = cfg["estimate"]["estimator"]
    _require(est_name in ESTIMATORS, f"unknown estimator {est_name!r}")
    lengthscales = _lengthscales(cfg)
    grid = cfg["tuning"]["grid"]
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
    outdir = _prepare_outdir(cfg)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    data = load_dataset(cfg)
    timings["load_data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reports = tuning_reports(data, est_name, lengthscales, grid)
    timings["tune"] = time.perf_counter() - t0

    rows = []
    for name in sorted(reports):
        report = reports[name]
        for cand, loss in zip(report.grid, report.losses):
            rows.append(
                (name, float(cand), float(loss), int(cand == report.selected))
            )
    tune_path = outdir / "tune.csv"
    write_table_csv(tune_path, ["hyperparameter", "candidate", "loss", "selected"], rows)
    results = {name: reports[name].selected for name in sorted(reports)}
    _write_manifest(outdir, "tune", cfg, [tune_path.name], timings, results)
    for name in sorted(reports):
        print(f"{name}: selected {format_float(reports[name].selected)}")
    print(f"wrote {tune_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelnc",
        description=(
            "Dose-response and heterogeneous-effect estimation with "
            "negative controls, plus a simulation lab."
        ),
        epilog=(
            "Precedence: built-in defaults, then --config or "
            "--from-manifest values, then flags."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument(
        "--from-manifest", help="rerun the configuration embedded in a manifest"
    )
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--output-dir", help="directory for outputs and manifest")
    common.add_argument("--workers", type=int, help="parallel worker count")

    p_est = sub.add_parser("estimate", parents=[common], help="fit and export a curve")
    p_est.add_argument("--data-path", help="CSV dataset path (overrides config)")

    p_sim = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo study")
    p_sim.add_argument("--replicates", type=int, help="replicate count override")

    p_tune = sub.add_parser("tune", parents=[common], help="export penalty-search grids")
    p_tune.add_argument("--data-path", help="CSV dataset path (overrides config)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "estimate":
            return cmd_estimate(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_tune(cfg)
    except (ConfigError, IngestError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except KernelncError as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
