"""Command-line front end.

Every subcommand reads a TOML config, applies flag overrides, runs, and writes
its table (CSV or JSON) and a JSON summary into ``--out``.  Exit codes: 0 ok,
1 checks ran but failed, 2 config or validation error, 3 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .convergence import ExperimentPlan, SlopeFitError, estimate_levels, fit_levels, fit_order, theoretical_order
from .drivers import BrownianDriver, JumpDriver, MarkDistribution
from .em_solver import DivergenceError, increment_moments, simulate_paths
from .models import build_initial, build_model, stratified_normal_sampler, validate_conditions
from .smoothing import SmoothingParams, check_properties
from .time_grid import make_grid

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SEED_ENV = "DELAYSIM_SEED"
DEFAULT_SEED = 12345

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_COMPUTE = 0, 1, 2, 3

SECTIONS = {
    "converge": {
        "model": {"name", "params"},
        "initial": {"kind", "value", "slope"},
        "grid": {"tau", "T", "levels", "n_ref"},
        "run": {"p", "paths", "batches", "seed"},
        "jumps": {"intensity", "marks"},
        "theory": {"theta", "alpha"},
    },
    "increments": {
        "model": {"name", "params"},
        "initial": {"kind", "value", "slope"},
        "grid": {"tau", "T", "levels"},
        "run": {"p", "paths", "batches", "seed", "estimator"},
        "jumps": {"intensity", "marks"},
    },
    "smoothing-check": {
        "smoothing": {"delta", "epsilon", "samples", "seed"},
    },
    "validate-model": {
        "model": {"name", "params"},
        "validation": {"trials", "scales", "seed"},
    },
    "simulate": {
        "model": {"name", "params"},
        "initial": {"kind", "value", "slope"},
        "grid": {"tau", "T", "N"},
        "run": {"seed", "path"},
        "jumps": {"intensity", "marks"},
    },
}


class ConfigError(ValueError):
    pass


# -- formatting ----------------------------------------------------------------


def fmt(value) -> str:
    """Shortest round-trip text for a number."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return repr(float(value))


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_json_ready(obj), indent=2) + "\n"


def table_text(header: list[str], rows: list[list], fmt_kind: str) -> str:
    if fmt_kind == "json":
        return dumps([dict(zip(header, row)) for row in rows])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def config_hash(cfg: dict) -> str:
    canon = json.dumps(_json_ready(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# -- config --------------------------------------------------------------------


def load_config(path: str, command: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    allowed = SECTIONS[command]
    for section, body in cfg.items():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}] for {command}")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        extra = set(body) - allowed[section]
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(extra))}")
    return cfg


def resolve_seed(flag, configured) -> int:
    if flag is not None:
        return int(flag)
    if configured is not None:
        return int(configured)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    return DEFAULT_SEED


def _require(section: dict, key: str, name: str):
    if key not in section:
        raise ConfigError(f"missing {name}.{key}")
    return section[key]


def _driver_for(model, jumps: dict):
    if model.kind == "brownian":
        return BrownianDriver(model.m)
    marks = MarkDistribution.from_config(jumps.get("marks", {"kind": "uniform", "a": 0.0, "b": 1.0}))
    intensity = float(jumps.get("intensity", 1.0))
    if not intensity > 0:
        raise ConfigError("jumps.intensity must be positive")
    return JumpDriver(intensity, marks)


def _positive(name: str, value) -> int:
    if value is None:
        return None
    if int(value) != value or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value}")
    return int(value)


# -- output --------------------------------------------------------------------


def write_outputs(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _summary(command: str, cfg: dict, seed: int, body: dict) -> dict:
    return {
        **body,
        "seed": seed,
        "command": command,
        "config_hash": config_hash(cfg),
        "version": __version__,
    }


# -- subcommands ---------------------------------------------------------------


LEVEL_HEADER = ["level", "dt", "p", "paths", "divergent", "error_p", "error_root", "stderr"]
INCREMENT_HEADER = ["dt", "p", "moment", "stderr"]


def cmd_converge(args, cfg: dict):
    grid, run = cfg.get("grid", {}), cfg.get("run", {})
    model_cfg, jumps, theory = cfg.get("model", {}), cfg.get("jumps", {}), cfg.get("theory", {})
    seed = resolve_seed(args.seed, run.get("seed"))
    paths = _positive("paths", args.paths if args.paths is not None else run.get("paths", 1000))
    resolved = {**cfg, "run": {**run, "seed": seed, "paths": paths}}
    plan = ExperimentPlan(
        model=_require(model_cfg, "name", "model"),
        model_params=model_cfg.get("params", {}),
        tau=float(_require(grid, "tau", "grid")),
        T=float(_require(grid, "T", "grid")),
        levels=tuple(_require(grid, "levels", "grid")),
        n_ref=int(_require(grid, "n_ref", "grid")),
        initial=cfg.get("initial", {"kind": "constant", "value": 0.5}),
        p=float(run.get("p", 2.0)),
        paths=paths,
        batches=int(run.get("batches", 20)),
        seed=seed,
        intensity=float(jumps.get("intensity", 1.0)),
        marks=jumps.get("marks", {"kind": "uniform", "a": 0.0, "b": 1.0}),
        theta=theory.get("theta"),
        alpha=theory.get("alpha"),
    )
    model = plan.build_model()
    plan.build_initial()
    plan.build_driver(model)

    def compute():
        levels = estimate_levels(plan, args.workers)
        rows = [[lv.N, lv.dt, lv.p, lv.paths, lv.divergent, lv.error_p, lv.error_root, lv.stderr] for lv in levels]
        body = {
            "kind": model.kind,
            "p": plan.p,
            "theoretical_order": theoretical_order(model.kind, plan.p, plan.tau, plan.T, plan.theta, plan.alpha),
            "theta": plan.theta,
            "alpha": plan.alpha,
            "divergent": sum(lv.divergent for lv in levels),
            "paths": plan.paths,
        }
        error = None
        try:
            body["slope"], body["slope_stderr"] = fit_levels(levels)
        except SlopeFitError as exc:
            body["slope"] = body["slope_stderr"] = None
            error = str(exc)
        summary = _summary("converge", resolved, seed, body)
        ext = "csv" if args.format == "csv" else "json"
        files = {f"converge_levels.{ext}": table_text(LEVEL_HEADER, rows, args.format), "converge_summary.json": dumps(summary)}
        return files, summary, error

    return compute


def _increment_orders(value) -> list[float]:
    orders = value if isinstance(value, list) else [value]
    return [float(v) for v in orders]


def cmd_increments(args, cfg: dict):
    grid, run = cfg.get("grid", {}), cfg.get("run", {})
    model_cfg, jumps = cfg.get("model", {}), cfg.get("jumps", {})
    seed = resolve_seed(args.seed, run.get("seed"))
    paths = _positive("paths", args.paths if args.paths is not None else run.get("paths", 1000))
    batches = int(run.get("batches", 20))
    if batches < 20:
        raise ConfigError("at least 20 batches are needed for batch-means errors")
    if paths % batches:
        raise ConfigError(f"paths={paths} must be divisible by batches={batches}")
    orders = _increment_orders(run.get("p", [2.0, 4.0]))
    if any(v < 2 for v in orders):
        raise ConfigError("moment orders must be at least 2")
    estimator = run.get("estimator", "crossfit")
    if estimator not in ("crossfit", "plugin"):
        raise ConfigError(f"unknown estimator {estimator!r}")
    tau, T = float(_require(grid, "tau", "grid")), float(_require(grid, "T", "grid"))
    grids = [make_grid(tau, T, int(n)) for n in _require(grid, "levels", "grid")]
    model = build_model(_require(model_cfg, "name", "model"), model_cfg.get("params", {}))
    xi = build_initial(cfg.get("initial", {"kind": "constant", "value": 0.5}), tau)
    driver = _driver_for(model, jumps)
    resolved = {**cfg, "run": {**run, "seed": seed, "paths": paths}}

    def compute():
        by_order = {v: [] for v in orders}
        for g in sorted(grids, key=lambda g: -g.dt):
            ests = increment_moments(model, xi, g, driver, orders, paths, seed, batches, args.workers, estimator)
            for e in ests:
                by_order[e.p].append(e)
        rows = [[e.dt, e.p, e.moment, e.stderr] for v in orders for e in by_order[v]]
        fits, error = [], None
        for v in orders:
            try:
                slope, se = fit_order([(e.dt, e.moment, e.stderr) for e in by_order[v]])
            except SlopeFitError as exc:
                slope = se = None
                error = f"p={fmt(v)}: {exc}"
            fits.append({"p": v, "slope": slope, "slope_stderr": se})
        body = {"kind": model.kind, "estimator": estimator, "paths": paths, "fits": fits}
        if len(fits) == 1:
            body["slope"], body["slope_stderr"] = fits[0]["slope"], fits[0]["slope_stderr"]
        summary = _summary("increments", resolved, seed, body)
        ext = "csv" if args.format == "csv" else "json"
        files = {f"increments.{ext}": table_text(INCREMENT_HEADER, rows, args.format), "increments_summary.json": dumps(summary)}
        return files, summary, error

    return compute


def cmd_smoothing_check(args, cfg: dict):
    sm = cfg.get("smoothing", {})
    params = SmoothingParams(float(_require(sm, "delta", "smoothing")), float(_require(sm, "epsilon", "smoothing")))
    samples = _positive("samples", args.paths if args.paths is not None else sm.get("samples", 10_000))
    seed = resolve_seed(args.seed, sm.get("seed"))
    resolved = {**cfg, "smoothing": {**sm, "samples": samples, "seed": seed}}

    def compute():
        report = _summary("smoothing-check", resolved, seed, check_properties(params, samples, seed))
        return {"smoothing_report.json": dumps(report)}, report, None

    return compute


def cmd_validate_model(args, cfg: dict):
    model_cfg, val = cfg.get("model", {}), cfg.get("validation", {})
    model = build_model(_require(model_cfg, "name", "model"), model_cfg.get("params", {}))
    trials = _positive("trials", args.paths if args.paths is not None else val.get("trials", 10_000))
    seed = resolve_seed(args.seed, val.get("seed"))
    scales = tuple(float(s) for s in val.get("scales", (0.5, 2.0, 8.0)))
    if not scales or any(not s > 0 for s in scales):
        raise ConfigError("validation.scales must be positive")
    resolved = {**cfg, "validation": {**val, "trials": trials, "seed": seed, "scales": list(scales)}}

    def compute():
        rep = validate_conditions(model, stratified_normal_sampler(scales), trials, seed)
        report = _summary("validate-model", resolved, seed, rep.to_dict())
        return {"validation_report.json": dumps(report)}, report, None

    return compute


def cmd_simulate(args, cfg: dict):
    grid_cfg, run = cfg.get("grid", {}), cfg.get("run", {})
    model_cfg, jumps = cfg.get("model", {}), cfg.get("jumps", {})
    seed = resolve_seed(args.seed, run.get("seed"))
    path = int(run.get("path", 0))
    if path < 0:
        raise ConfigError("run.path must be non-negative")
    tau = float(_require(grid_cfg, "tau", "grid"))
    grid = make_grid(tau, float(_require(grid_cfg, "T", "grid")), int(_require(grid_cfg, "N", "grid")))
    model = build_model(_require(model_cfg, "name", "model"), model_cfg.get("params", {}))
    xi = build_initial(cfg.get("initial", {"kind": "constant", "value": 0.5}), tau)
    driver = _driver_for(model, jumps)

    def compute():
        batch = simulate_paths(model, xi, grid, driver.sample(grid, seed, [path]))
        t, y = batch.path(0).full()
        header = ["t"] + [f"component_{i}" for i in range(model.n)]
        rows = [[ti, *yi] for ti, yi in zip(t, y)]
        ext = "csv" if args.format == "csv" else "json"
        return {f"path.{ext}": table_text(header, rows, args.format)}, None, None

    return compute


COMMANDS = {
    "converge": (cmd_converge, "strong-error rate against a fine reference"),
    "increments": (cmd_increments, "increment moments max_k E|Y_(k+1) - Y_k|^p per level"),
    "smoothing-check": (cmd_smoothing_check, "check the inequalities of the |x| smoothing pair"),
    "validate-model": (cmd_validate_model, "sample the declared coefficient conditions"),
    "simulate": (cmd_simulate, "dump a single EM path"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaysim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML config file")
        p.add_argument("--seed", type=int, help=f"overrides the config seed; falls back to ${SEED_ENV}")
        p.add_argument("--paths", type=int, help="Monte Carlo paths (samples/trials for the check commands)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: cwd)")
        p.add_argument("--workers", type=int, default=1, help="worker threads; results do not depend on it")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if args.paths is not None and args.paths < 1:
            raise ConfigError("--paths must be at least 1")
        cfg = load_config(args.config, args.command)
        compute = handler(args, cfg)
    except (ValueError, TypeError, KeyError) as exc:
        print(f"delaysim {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        files, summary, error = compute()
    except (DivergenceError, SlopeFitError, FloatingPointError) as exc:
        print(f"delaysim {args.command}: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE

    write_outputs(args.out, files)
    if summary is not None:
        sys.stdout.write(dumps(summary))
    if error is not None:
        print(f"delaysim {args.command}: computation failed: {error}", file=sys.stderr)
        return EXIT_COMPUTE
    if summary is not None and summary.get("passed") is False:
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
