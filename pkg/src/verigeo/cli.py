"""Command-line interface.

Every subcommand reads an optional YAML config (``--config``); flags given
on the command line override file values.  File-producing subcommands
write into ``--out`` together with a ``manifest.json`` that records the
resolved config, its SHA-256 digest and every artifact written.

Exit codes: 0 success, 1 input/config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .covariance import SmoothingConfig, VariogramModel, smooth_residuals
from .dataset import CsvSchema, DesignSpec, format_real, read_csv, write_csv
from .errors import ConfigError, InputError, NumericalError
from .kriging import PipelineConfig, krige_arrays, loocv, run_pipeline, Z975
from .regression import fit_egls, fit_ols, fit_weighted
from .simulation import (PRESETS, Cell, ExperimentConfig, FieldSpec, NoiseModel, contaminate,
                         default_surface, default_workers, derive_seed, domain_side, preset,
                         run_experiment, simulate_field, write_tables)
from .theory import theory_bounds
from .veracity import VeracityConfig, score_all

DEFAULTS = {
    "seed": 0,
    "data": {"x": "x", "y": "y", "value": "z", "design": ["intercept"]},
    "veracity": {"delta": None, "alpha": 0.0, "variant": "median_iqr", "include_self": True,
                 "min_neighbors": 5},
    "smoothing": {"q": 1.0},
    "regression": {"method": "vs", "max_iter": 20, "tol": 1e-6},
    "variogram": {"family": "exponential", "estimator": "cressie_hawkins", "bins": 15,
                  "smoothness": None, "n_starts": 10, "min_pairs": 30},
    "crossval": {"exclude": [], "refit_trend": True},
    "simulate": {"n": 500, "sigma_A": 5.0, "alpha_M": 2.0, "q_e": 0.95, "H1": 50.0,
                 "good_set_seed": 7, "surface_seed": 11},
    "experiment": {"preset": "desk", "cells": None, "replications": 100, "good_set_seed": 7,
                   "surface_seed": 11, "estimators": ["med_vs", "mean_vs", "ols", "egls"],
                   "covariance_methods": ["vs", "wls"], "egls_starts": 2, "workers": None},
}

SUBCOMMANDS = ("score", "fit", "smooth", "variogram", "krige", "crossval", "simulate",
               "experiment", "bounds")


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def log_stage(stage: str, t0: float, **scalars) -> None:
    """One JSON line per pipeline stage on stderr."""
    rec = {"stage": stage, "seconds": round(time.perf_counter() - t0, 6)}
    rec.update({k: _jsonable(v) for k, v in scalars.items()})
    print(json.dumps(rec, sort_keys=True), file=sys.stderr, flush=True)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# -- configuration ----------------------------------------------------------

def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in update.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def load_config(path) -> dict:
    """Read a YAML config and merge it over :data:`DEFAULTS`."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: malformed YAML{where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _merge(DEFAULTS, data)


# flag dest -> config path
FLAG_PATHS = {
    "seed": ("seed",),
    "x": ("data", "x"), "y": ("data", "y"), "value": ("data", "value"),
    "design": ("data", "design"),
    "delta": ("veracity", "delta"), "alpha": ("veracity", "alpha"),
    "variant": ("veracity", "variant"), "min_neighbors": ("veracity", "min_neighbors"),
    "exclude_self": ("veracity", "include_self"),
    "q": ("smoothing", "q"),
    "method": ("regression", "method"), "max_iter": ("regression", "max_iter"),
    "tol": ("regression", "tol"),
    "family": ("variogram", "family"), "estimator": ("variogram", "estimator"),
    "bins": ("variogram", "bins"), "smoothness": ("variogram", "smoothness"),
    "n_starts": ("variogram", "n_starts"),
    "exclude": ("crossval", "exclude"), "fixed_trend": ("crossval", "refit_trend"),
    "n": ("simulate", "n"), "sigma_a": ("simulate", "sigma_A"),
    "alpha_m": ("simulate", "alpha_M"), "qe": ("simulate", "q_e"),
    "preset": ("experiment", "preset"), "replications": ("experiment", "replications"),
    "workers": ("experiment", "workers"),
}


def resolve_config(args) -> dict:
    cfg = load_config(args.config)
    for dest, path in FLAG_PATHS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if dest in ("exclude_self", "fixed_trend"):
            if not val:
                continue
            val = False
        if dest == "design":
            val = [t.strip() for t in val.split(",") if t.strip()]
        if dest == "exclude":
            val = [int(t) for t in val.split(",") if t.strip()]
        node = cfg
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = val
    return cfg


def config_digest(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def veracity_config(cfg: dict) -> VeracityConfig:
    v = cfg["veracity"]
    try:
        return VeracityConfig(delta=v["delta"], alpha=float(v["alpha"]), variant=v["variant"],
                              include_self=bool(v["include_self"]),
                              min_neighbors=int(v["min_neighbors"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise ConfigError(f"veracity: {exc}") from None


def pipeline_config(cfg: dict) -> PipelineConfig:
    vg = cfg["variogram"]
    return PipelineConfig(veracity=veracity_config(cfg), q=float(cfg["smoothing"]["q"]),
                          family=vg["family"], smoothness=vg["smoothness"],
                          estimator=vg["estimator"], bins=int(vg["bins"]),
                          min_pairs=int(vg["min_pairs"]), n_starts=int(vg["n_starts"]),
                          seed=int(cfg["seed"]),
                          refit_trend=bool(cfg["crossval"]["refit_trend"]))


def read_input(path, cfg: dict):
    d = cfg["data"]
    return read_csv(path, CsvSchema(d["x"], d["y"], d["value"]), DesignSpec(tuple(d["design"])))


class Outputs:
    """Collects artifacts written to one directory and writes the manifest."""

    def __init__(self, out_dir, subcommand: str, cfg: dict):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.cfg = cfg
        self.paths: list[str] = []

    def path(self, name: str) -> Path:
        self.paths.append(name)
        return self.dir / name

    def write_json(self, name: str, obj) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def finish(self) -> None:
        manifest = {"subcommand": self.subcommand, "config": self.cfg,
                    "config_digest": config_digest(self.cfg), "master_seed": self.cfg["seed"],
                    "artifact_paths": sorted(self.paths), "tool_version": __version__}
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


# -- subcommands ------------------------------------------------------------

def cmd_score(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    data = read_input(args.input, cfg)
    scores = score_all(data, veracity_config(cfg))
    write_csv(data, out.path("scores.csv"),
              {"vs": scores.scores, "n_neighbors": scores.neighbor_counts,
               "sparse": scores.sparse.astype(float)})
    log_stage("score", t0, n=data.n, delta=scores.config.delta,
              mean_vs=float(np.mean(scores.scores)), sparse=int(scores.sparse.sum()))


def _regression(data, cfg):
    method = cfg["regression"]["method"]
    if method == "ols":
        return fit_ols(data), None, None
    scores = score_all(data, veracity_config(cfg))
    if method == "vs":
        return fit_weighted(data, scores.scores), None, scores
    if method == "egls":
        vg = cfg["variogram"]
        start = VariogramModel(vg["family"], 0.0, 1.0, 1.0,
                               vg["smoothness"] or (1.0 if vg["family"] == "matern" else None))
        fit, report = fit_egls(data, start, int(cfg["regression"]["max_iter"]),
                               float(cfg["regression"]["tol"]),
                               variogram_options={"empirical": {"bins": int(vg["bins"]),
                                                                "estimator": vg["estimator"]},
                                                  "fit": {"n_starts": int(vg["n_starts"]),
                                                          "seed": int(cfg["seed"])}})
        return fit, report, None
    raise ConfigError(f"regression.method must be one of ols, vs, egls; got {method!r}")


def cmd_fit(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    data = read_input(args.input, cfg)
    fit, report, _ = _regression(data, cfg)
    summary = {"method": fit.method, "columns": list(data.column_names),
               "beta": fit.beta.tolist(), "gram_condition": fit.gram_condition}
    if report is not None:
        summary["solve_report"] = {"iterations": report.iterations, "converged": report.converged,
                                   "beta_delta": report.beta_delta}
    out.write_json("fit.json", summary)
    write_csv(data, out.path("fit.csv"), {"weight": fit.weights, "residual": fit.residuals})
    log_stage("fit", t0, method=fit.method, beta=fit.beta)


def cmd_smooth(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    data = read_input(args.input, cfg)
    scores = score_all(data, veracity_config(cfg))
    fit = fit_weighted(data, scores.scores)
    eps = smooth_residuals(data, fit, scores, SmoothingConfig(float(cfg["smoothing"]["q"]),
                                                              scores.config))
    write_csv(data, out.path("smoothed.csv"),
              {"vs": scores.scores, "residual": fit.residuals, "smoothed": eps})
    log_stage("smooth", t0, q=cfg["smoothing"]["q"], beta=fit.beta)


def cmd_variogram(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    data = read_input(args.input, cfg)
    res = run_pipeline(data, pipeline_config(cfg))
    out.write_json("variogram.json", {"empirical": res.variogram.as_dict(),
                                      "model": res.model.as_dict(), "beta": res.fit.beta.tolist()})
    log_stage("variogram", t0, **res.model.as_dict())


def cmd_krige(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    data = read_input(args.input, cfg)
    d = cfg["data"]
    design = DesignSpec(tuple(d["design"]))
    cols = design.custom_columns
    targets = _read_targets(args.targets, d["x"], d["y"], cols)
    X0 = design.build(targets[0], targets[1])
    res = run_pipeline(data, pipeline_config(cfg))
    resid, var, _ = krige_arrays(data.coords, res.residuals, res.model, targets[0])
    pred = X0 @ res.fit.beta + resid
    margin = Z975 * np.sqrt(var)
    with open(out.path("predictions.csv"), "w") as fh:
        fh.write("x,y,predicted,kriging_variance,margin\n")
        for (x, y), p, v, m in zip(targets[0], pred, var, margin):
            fh.write(",".join(format_real(t) for t in (x, y, p, v, m)) + "\n")
    out.write_json("model.json", {"model": res.model.as_dict(), "beta": res.fit.beta.tolist()})
    log_stage("krige", t0, targets=len(pred), **res.model.as_dict())


def _read_targets(path, xcol, ycol, extra):
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InputError(f"{path}: no target rows")
    need = [xcol, ycol, *extra]
    missing = [c for c in need if c not in rows[0]]
    if missing:
        raise InputError(f"{path}: missing column(s) {missing}")
    try:
        coords = np.array([[float(r[xcol]), float(r[ycol])] for r in rows])
        cols = {c: np.array([float(r[c]) for r in rows]) for c in extra}
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return coords, cols


def cmd_crossval(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    data = read_input(args.input, cfg)
    exclude = set(int(i) for i in cfg["crossval"]["exclude"])
    if args.exclude_file:
        exclude |= {int(t) for t in Path(args.exclude_file).read_text().split()}
    test = [i for i in range(data.n) if i not in exclude]
    report = loocv(data, pipeline_config(cfg), test)
    out.write_json("crossval.json", report.as_dict())
    log_stage("crossval", t0, folds=len(test), mspe=report.mspe, coverage_95=report.coverage_95,
              failures=report.failures)


def cmd_simulate(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    s = cfg["simulate"]
    n = int(s["n"])
    side = domain_side(n)
    surface = default_surface(side, int(s["surface_seed"]), float(s["H1"]))
    seed = int(cfg["seed"])
    clean = simulate_field(FieldSpec(n, side, surface=surface, seed=derive_seed(seed, n, 0, 0)))
    noise = NoiseModel(float(s["q_e"]), float(s["alpha_M"]), float(s["sigma_A"]),
                       int(s["good_set_seed"]))
    data, good = contaminate(clean, noise, derive_seed(seed, n, 0, 1))
    write_csv(data, out.path("simulated.csv"),
              {"clean": clean.values, "good": good.astype(float)})
    log_stage("simulate", t0, n=n, side=side, bad=int((~good).sum()))


def experiment_config(cfg: dict) -> ExperimentConfig:
    e = cfg["experiment"]
    workers = e["workers"] if e["workers"] is not None else default_workers()
    fields = {"replications": int(e["replications"]), "master_seed": int(cfg["seed"]),
              "good_set_seed": int(e["good_set_seed"]), "surface_seed": int(e["surface_seed"]),
              "estimators": tuple(e["estimators"]),
              "covariance_methods": tuple(e["covariance_methods"]),
              "veracity": veracity_config(cfg), "q": float(cfg["smoothing"]["q"]),
              "n_starts": int(cfg["variogram"]["n_starts"]), "egls_starts": int(e["egls_starts"]),
              "workers": int(workers)}
    try:
        if e["cells"]:
            return ExperimentConfig(cells=tuple(Cell(**c) for c in e["cells"]), **fields)
        return preset(e["preset"], **fields)
    except TypeError as exc:
        raise ConfigError(f"experiment: {exc}") from None


def cmd_experiment(args, cfg, out: Outputs):
    t0 = time.perf_counter()
    ecfg = experiment_config(cfg)

    def progress(c):
        log_stage("cell", t0, n=c.cell.n, sigma_A=c.cell.sigma_A, alpha_M=c.cell.alpha_M,
                  q_e=c.cell.q_e, re=c.relative_efficiencies.get("ols/med_vs"),
                  failures=len(c.failures))

    result = run_experiment(ecfg, progress)
    for p in write_tables(result, out.dir):
        out.paths.append(p.name)
    summary = result.as_dict()
    for c in summary["cells"]:
        c.pop("seconds")  # keep the file byte-identical across runs
    out.write_json("experiment.json", summary)
    log_stage("experiment", t0, cells=len(result.cells))


def cmd_bounds(args, cfg, out: Outputs | None):
    lo, hi = theory_bounds(args.qe, args.sigma_eps)
    print(f"C_l = {lo:.4f}")
    print(f"C_u = {hi:.4f}")
    if out is not None:
        out.write_json("bounds.json", {"q_e": args.qe, "sigma_eps": args.sigma_eps,
                                       "C_l": lo, "C_u": hi})


COMMANDS = {"score": cmd_score, "fit": cmd_fit, "smooth": cmd_smooth,
            "variogram": cmd_variogram, "krige": cmd_krige, "crossval": cmd_crossval,
            "simulate": cmd_simulate, "experiment": cmd_experiment, "bounds": cmd_bounds}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="verigeo", description="Veracity-score robust geostatistics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                                parser_class=_Parser)

    def common(p, data=True, out_default="verigeo-out"):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int)
        if data:
            p.add_argument("input", help="input CSV")
            p.add_argument("--x", help="x column name")
            p.add_argument("--y", help="y column name")
            p.add_argument("--value", help="response column name")
            p.add_argument("--design", help="comma-separated design terms")

    def vs_flags(p):
        p.add_argument("--delta", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--variant", choices=("median_iqr", "mean_sd"))
        p.add_argument("--min-neighbors", type=int)
        p.add_argument("--exclude-self", action="store_true", default=None,
                       help="leave each observation out of its own neighborhood")

    def vg_flags(p):
        p.add_argument("--q", type=float, help="smoothing exponent")
        p.add_argument("--family", choices=("exponential", "matern"))
        p.add_argument("--estimator", choices=("matheron", "cressie_hawkins"))
        p.add_argument("--bins", type=int)
        p.add_argument("--smoothness", type=float)
        p.add_argument("--n-starts", type=int)

    p = sub.add_parser("score", help="veracity scores")
    common(p)
    vs_flags(p)
    p = sub.add_parser("fit", help="trend regression")
    common(p)
    vs_flags(p)
    p.add_argument("--method", choices=("ols", "vs", "egls"))
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--family", choices=("exponential", "matern"))
    p.add_argument("--n-starts", type=int)
    p = sub.add_parser("smooth", help="score-smoothed residuals")
    common(p)
    vs_flags(p)
    p.add_argument("--q", type=float)
    p = sub.add_parser("variogram", help="empirical variogram and WLS fit of smoothed residuals")
    common(p)
    vs_flags(p)
    vg_flags(p)
    p = sub.add_parser("krige", help="predict at target locations")
    common(p)
    vs_flags(p)
    vg_flags(p)
    p.add_argument("--targets", required=True, help="CSV of target locations")
    p = sub.add_parser("crossval", help="leave-one-out cross-validation")
    common(p)
    vs_flags(p)
    vg_flags(p)
    p.add_argument("--exclude", help="comma-separated 0-based indices left out of the test set")
    p.add_argument("--exclude-file", help="file of whitespace-separated 0-based indices")
    p.add_argument("--fixed-trend", action="store_true", default=None,
                   help="fit the trend once on all data instead of per fold")
    p = sub.add_parser("simulate", help="simulate one contaminated field")
    common(p, data=False)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma-a", type=float)
    p.add_argument("--alpha-m", type=float)
    p.add_argument("--qe", type=float)
    p = sub.add_parser("experiment", help="Monte Carlo estimator comparison")
    common(p, data=False)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--replications", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--n-starts", type=int)
    p = sub.add_parser("bounds", help="IQR bound constants C_l, C_u")
    p.add_argument("--qe", type=float, required=True)
    p.add_argument("--sigma-eps", type=float, default=1.0)
    p.add_argument("--out", default=None, help="also write bounds.json here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "bounds":
            cfg = {"seed": 0, "bounds": {"q_e": args.qe, "sigma_eps": args.sigma_eps}}
            out = Outputs(args.out, "bounds", cfg) if args.out else None
            cmd_bounds(args, cfg, out)
        else:
            cfg = resolve_config(args)
            out = Outputs(args.out, args.command, cfg)
            COMMANDS[args.command](args, cfg, out)
        if out is not None:
            out.finish()
    except InputError as exc:
        print(f"verigeo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"verigeo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"verigeo {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
