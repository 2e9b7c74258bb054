"""Command line front end: ``locavg <command> [options]``.

Every option may also be given in a JSON file passed with ``--config``
(keys are the long option names with dashes or underscores); options on the
command line take precedence. Each run writes a manifest JSON recording the
resolved configuration, which can be fed back through ``--config``.

Exit status: 0 success, 2 input error, 3 numerical failure, 4 configuration
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BaselineSpec
from .constancy import _jsonable
from .design import CsvSchema, add_intercept, read_csv, sort_and_group
from .errors import ConfigError, InputError, LocavgError
from .kernels import KERNEL_NAMES
from .local_average import fit_groups
from .semivarying import fit_joint, fit_lape
from .sim import (
    DGP, THREADS_ENV, LocalAverageSpec, TestSpec, constant_study, default_threads, density_trace,
    mise_grid, mise_study, run_tests, size_power_study, timing_bench,
)
from .smoothing import SmootherSpec, default_grid, smooth_coefficient

COMMON = {"config": None, "manifest": None, "threads": None}

DEFAULTS = {
    "fit-varying": {
        "input": None, "u_col": "u", "y_col": "y", "x_cols": "", "z_cols": "", "intercept": False,
        "group_size": 10, "bandwidth": 0.3, "degree": 3, "kernel": "epanechnikov", "target": None,
        "alpha": 0.05, "grid": 100, "expand_window": False, "ridge": 0.0, "output": "curve.csv",
    },
    "fit-semi": {
        "input": None, "u_col": "u", "y_col": "y", "x_cols": "", "z_cols": "", "intercept": False,
        "group_size": 10, "method": "projection", "alpha": 0.05, "output": "semi.json",
    },
    "test": {
        "input": None, "u_col": "u", "y_col": "y", "x_cols": "", "z_cols": "", "intercept": False,
        "group_size": 10, "type": "all", "kernel": "epanechnikov", "target": None,
        "bandwidth": None, "bandwidth_t2": None, "weighted_t2": True, "output": "test.json",
    },
    "simulate": {
        "example": 2, "study": None, "n": 500, "reps": 100, "seed": 0, "group_size": 10,
        "group_sizes": "", "bandwidth": 0.8, "degree": 3, "kernel": "epanechnikov",
        "compare": "", "a_values": "", "alpha": 0.05, "tests": "t1,t2,t3", "weighted_t2": True,
        "method": "projection", "sigma": None, "output": "study",
    },
    "bench": {
        "example": 1, "n": 500, "reps": 20, "seed": 0, "group_size": 10, "bandwidth": 0.3,
        "degree": 3, "kernel": "epanechnikov", "grid": 100, "estimators": "local_average,one_step,lape",
        "output": "bench",
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _help(cmd: str, key: str, text: str) -> str:
    default = DEFAULTS[cmd].get(key)
    return f"{text} (default: {default})" if default not in (None, "") else text


def _add_data_args(sp, cmd):
    sp.add_argument("--input", help="CSV file with a header row")
    sp.add_argument("--u-col", help=_help(cmd, "u_col", "index variable column"))
    sp.add_argument("--y-col", help=_help(cmd, "y_col", "response column"))
    sp.add_argument("--x-cols", help="comma separated varying-part columns (default: all others)")
    sp.add_argument("--z-cols", help="comma separated constant-part columns")
    sp.add_argument("--intercept", action=argparse.BooleanOptionalAction,
                    help="prepend a constant-one varying-part column (default: off)")
    sp.add_argument("--group-size", type=int, help=_help(cmd, "group_size", "rows per group I"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="locavg", description=__doc__.split("\n\n")[0],
                     argument_default=argparse.SUPPRESS)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option values; command line flags win")
        sp.add_argument("--manifest", help="manifest path (default: next to the output)")
        sp.add_argument("--threads", type=int,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")

    c = "fit-varying"
    sp = sub.add_parser(c, help="fit a varying coefficient model and smooth one coefficient",
                        argument_default=argparse.SUPPRESS)
    common(sp)
    _add_data_args(sp, c)
    sp.add_argument("--bandwidth", type=float, help=_help(c, "bandwidth", "smoothing bandwidth h"))
    sp.add_argument("--degree", type=int, choices=(1, 3), help=_help(c, "degree", "local polynomial degree"))
    sp.add_argument("--kernel", choices=KERNEL_NAMES, help=_help(c, "kernel", "kernel"))
    sp.add_argument("--target", type=int, help="1-based varying column to smooth (default: last)")
    sp.add_argument("--alpha", type=float, help=_help(c, "alpha", "band level"))
    sp.add_argument("--grid", type=int, help=_help(c, "grid", "number of grid points"))
    sp.add_argument("--expand-window", action=argparse.BooleanOptionalAction,
                    help="double h locally where the window is rank deficient (default: off)")
    sp.add_argument("--ridge", type=float, help=_help(c, "ridge", "ridge added to each group Gram"))
    sp.add_argument("--output", help=_help(c, "output", "curve CSV"))

    c = "fit-semi"
    sp = sub.add_parser(c, help="estimate constant coefficients of a semivarying model",
                        argument_default=argparse.SUPPRESS)
    common(sp)
    _add_data_args(sp, c)
    sp.add_argument("--method", choices=("projection", "joint"), help=_help(c, "method", "estimator route"))
    sp.add_argument("--alpha", type=float, help=_help(c, "alpha", "interval level"))
    sp.add_argument("--output", help=_help(c, "output", "result JSON"))

    c = "test"
    sp = sub.add_parser(c, help="test whether one coefficient is constant",
                        argument_default=argparse.SUPPRESS)
    common(sp)
    _add_data_args(sp, c)
    sp.add_argument("--type", choices=("t1", "t2", "t3", "all"), help=_help(c, "type", "test"))
    sp.add_argument("--kernel", choices=KERNEL_NAMES, help=_help(c, "kernel", "kernel"))
    sp.add_argument("--target", type=int, help="1-based varying column tested (default: last)")
    sp.add_argument("--bandwidth", type=float, help="T1 bandwidth (default: n^-2/5)")
    sp.add_argument("--bandwidth-t2", type=float, help="T2 bandwidth (default: n^-1/5)")
    sp.add_argument("--weighted-t2", action=argparse.BooleanOptionalAction,
                    help="weight T2 residuals by the inverse pointwise variance (default: on)")
    sp.add_argument("--output", help=_help(c, "output", "result JSON"))

    c = "simulate"
    sp = sub.add_parser(c, help="run a Monte Carlo study", argument_default=argparse.SUPPRESS)
    common(sp)
    sp.add_argument("--example", type=int, choices=range(1, 9), help=_help(c, "example", "example id"))
    sp.add_argument("--study", choices=("mise", "constant", "size", "power"),
                    help="study type (default: mise for 1-3, constant for 4-6, power for 7-8)")
    sp.add_argument("--n", type=int, help=_help(c, "n", "sample size"))
    sp.add_argument("--reps", type=int, help=_help(c, "reps", "replications"))
    sp.add_argument("--seed", type=int, help=_help(c, "seed", "master seed"))
    sp.add_argument("--group-size", type=int, help=_help(c, "group_size", "rows per group I"))
    sp.add_argument("--group-sizes", help="comma separated group sizes for the constant study")
    sp.add_argument("--bandwidth", type=float, help=_help(c, "bandwidth", "smoothing bandwidth h"))
    sp.add_argument("--degree", type=int, choices=(1, 3), help=_help(c, "degree", "local polynomial degree"))
    sp.add_argument("--kernel", choices=KERNEL_NAMES, help=_help(c, "kernel", "kernel"))
    sp.add_argument("--compare", help="comma separated baselines added to a MISE study: one_step, two_step")
    sp.add_argument("--a-values", help="comma separated a_param values (examples 7-8)")
    sp.add_argument("--alpha", type=float, help=_help(c, "alpha", "test level"))
    sp.add_argument("--tests", help=_help(c, "tests", "tests in a size/power study"))
    sp.add_argument("--weighted-t2", action=argparse.BooleanOptionalAction,
                    help="weighted T2 (default: on)")
    sp.add_argument("--method", choices=("projection", "joint"), help=_help(c, "method", "constant-part route"))
    sp.add_argument("--sigma", type=float, help="noise scale override (default: calibrated)")
    sp.add_argument("--output", help=_help(c, "output", "output prefix for .csv and .json"))

    c = "bench"
    sp = sub.add_parser(c, help="time the estimators", argument_default=argparse.SUPPRESS)
    common(sp)
    sp.add_argument("--example", type=int, choices=range(1, 9), help=_help(c, "example", "example id"))
    sp.add_argument("--n", type=int, help=_help(c, "n", "sample size"))
    sp.add_argument("--reps", type=int, help=_help(c, "reps", "timed repetitions"))
    sp.add_argument("--seed", type=int, help=_help(c, "seed", "seed"))
    sp.add_argument("--group-size", type=int, help=_help(c, "group_size", "rows per group I"))
    sp.add_argument("--bandwidth", type=float, help=_help(c, "bandwidth", "bandwidth h"))
    sp.add_argument("--degree", type=int, choices=(1, 3), help=_help(c, "degree", "local polynomial degree"))
    sp.add_argument("--kernel", choices=KERNEL_NAMES, help=_help(c, "kernel", "kernel"))
    sp.add_argument("--grid", type=int, help=_help(c, "grid", "grid points"))
    sp.add_argument("--estimators", help=_help(c, "estimators", "estimators to time"))
    sp.add_argument("--output", help=_help(c, "output", "output prefix"))
    return parser


def resolve_config(argv) -> dict:
    """Defaults, then ``--config`` file values, then explicit flags."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    cmd = ns.pop("command")
    cfg = {"command": cmd, **COMMON, **DEFAULTS[cmd]}
    path = ns.get("config")
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config {path} is not valid JSON: {err}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, val in loaded.items():
            k = key.replace("-", "_")
            if k == "command":
                if val != cmd:
                    raise ConfigError(f"config is for {val!r}, not {cmd!r}")
                continue
            if k not in cfg:
                raise ConfigError(f"unknown config key {key!r} for {cmd}")
            cfg[k] = val
    cfg.update(ns)
    return cfg


def _split(s) -> list:
    if isinstance(s, (list, tuple)):
        return [str(v).strip() for v in s]
    return [v.strip() for v in str(s or "").split(",") if v.strip()]


def _load(cfg):
    if not cfg["input"]:
        raise ConfigError("--input is required")
    schema = CsvSchema(u=cfg["u_col"], y=cfg["y_col"], x=tuple(_split(cfg["x_cols"])),
                       z=tuple(_split(cfg["z_cols"])))
    try:
        data = read_csv(cfg["input"], schema)
    except FileNotFoundError:
        raise InputError(f"input file not found: {cfg['input']}") from None
    return add_intercept(data) if cfg["intercept"] else data


def _target(cfg, p) -> int:
    t = cfg.get("target")
    if t is None:
        return p - 1
    t = int(t)
    if not 1 <= t <= p:
        raise ConfigError(f"--target must be between 1 and {p}, got {t}")
    return t - 1


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_fit_varying(cfg):
    data = _load(cfg)
    design = sort_and_group(data, cfg["group_size"])
    fit = fit_groups(design, ridge=float(cfg["ridge"]))
    t = _target(cfg, fit.p)
    spec = SmootherSpec(cfg["kernel"], float(cfg["bandwidth"]), int(cfg["degree"]))
    grid = default_grid(fit.u_bar, int(cfg["grid"]))
    curve = smooth_coefficient(fit, t, spec, grid, alpha=cfg["alpha"], expand_window=bool(cfg["expand_window"]))
    Path(cfg["output"]).parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(cfg["output"])
    return [cfg["output"]], {"k": fit.k, "dropped": design.dropped_count, "sigma2_hat": fit.sigma2_hat,
                             "target_name": data.x_names[t]}


def _run_fit_semi(cfg):
    data = _load(cfg)
    if data.q == 0:
        raise ConfigError("fit-semi needs --z-cols")
    design = sort_and_group(data, cfg["group_size"])
    fit = (fit_lape if cfg["method"] == "projection" else fit_joint)(design)
    ci = fit.confint(float(cfg["alpha"]))
    out = {
        "method": fit.method, "names": list(data.z_names), "b_hat": fit.b_hat, "std_err": fit.std_err,
        "sigma_b": fit.sigma_b, "conf_int": ci, "alpha": cfg["alpha"], "rss0": fit.rss0,
        "sigma2_hat": fit.sigma2_hat, "n": fit.n, "k": design.k, "dropped": design.dropped_count,
        "u_bar": fit.u_bar, "a_hat": fit.a_hat, "x_names": list(data.x_names),
    }
    _write_json(cfg["output"], out)
    return [cfg["output"]], {}


def _run_test(cfg):
    data = _load(cfg)
    design = sort_and_group(data, cfg["group_size"])
    t = _target(cfg, design.p)
    tests = ("t1", "t2", "t3") if cfg["type"] == "all" else (cfg["type"],)
    spec = TestSpec(tests=tests, group_size=design.group_size, kernel=cfg["kernel"], target=t,
                    h1=cfg["bandwidth"], h2=cfg["bandwidth_t2"], weighted_t2=bool(cfg["weighted_t2"]))
    if design.z is not None and any(x in tests for x in ("t1", "t2")):
        raise ConfigError("T1 and T2 apply to varying coefficient data without constant-part columns")
    results = run_tests(design, spec)
    out = {name: r.to_dict() for name, r in results.items()}
    _write_json(cfg["output"], out)
    return [cfg["output"]], {}


def _run_simulate(cfg):
    ex = int(cfg["example"])
    study = cfg["study"] or ("mise" if ex <= 3 else "constant" if ex <= 6 else "power")
    threads = cfg["threads"]
    a_values = [float(v) for v in _split(cfg["a_values"])]
    a_param = (a_values[0] if a_values else 0.0) if ex in (7, 8) else None
    if study == "size" and ex in (7, 8):
        a_values, a_param = [0.0], 0.0
    sigma = None if cfg["sigma"] is None else float(cfg["sigma"])
    dgp = DGP(ex, int(cfg["n"]), int(cfg["seed"]), a_param, sigma)
    kernel = cfg["kernel"]
    if study == "mise":
        specs = [LocalAverageSpec(int(cfg["group_size"]),
                                  SmootherSpec(kernel, float(cfg["bandwidth"]), int(cfg["degree"])))]
        for name in _split(cfg["compare"]):
            if name not in ("one_step", "two_step"):
                raise ConfigError(f"unknown baseline {name!r}")
            specs.append(BaselineSpec(name, kernel, float(cfg["bandwidth"])))
        report = mise_study(specs, dgp, mise_grid(), int(cfg["reps"]), threads)
    elif study == "constant":
        sizes = [int(v) for v in _split(cfg["group_sizes"])] or [int(cfg["group_size"])]
        report = constant_study(dgp, sizes, int(cfg["reps"]), cfg["method"], threads)
    else:
        if ex not in (7, 8):
            raise ConfigError("size and power studies use examples 7 and 8")
        spec = TestSpec(tests=tuple(_split(cfg["tests"])), group_size=int(cfg["group_size"]),
                        kernel=kernel, weighted_t2=bool(cfg["weighted_t2"]))
        report = size_power_study(spec, dgp, a_values or [a_param], float(cfg["alpha"]),
                                  int(cfg["reps"]), threads)
    prefix = cfg["output"]
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(f"{prefix}.csv")
    with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    outputs = [f"{prefix}.csv", f"{prefix}.json"]
    if study in ("size", "power"):
        import csv

        with open(f"{prefix}_density.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "x", "density"])
            for key, vals in report.samples.items():
                finite = np.asarray(vals, dtype=float)
                finite = finite[np.isfinite(finite)]
                if finite.size < 2:
                    continue
                xs, ds = density_trace(finite)
                for x, d in zip(xs, ds):
                    w.writerow([key, repr(float(x)), repr(float(d))])
        outputs.append(f"{prefix}_density.csv")
    return outputs, {"study": study}


def _run_bench(cfg):
    ex = int(cfg["example"])
    dgp = DGP(ex, int(cfg["n"]), int(cfg["seed"]), 0.0 if ex in (7, 8) else None)
    report = timing_bench(
        dgp, grid_size=int(cfg["grid"]), reps=int(cfg["reps"]), group_size=int(cfg["group_size"]),
        h=float(cfg["bandwidth"]), degree=int(cfg["degree"]), kernel=cfg["kernel"],
        estimators=tuple(_split(cfg["estimators"])),
    )
    prefix = cfg["output"]
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(f"{prefix}.csv")
    with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    # wall times vary from run to run; keep them out of the reproducible outputs
    _write_json(f"{prefix}_timings.json", report.timings)
    return [f"{prefix}.csv", f"{prefix}.json", f"{prefix}_timings.json"], {}


RUNNERS = {
    "fit-varying": _run_fit_varying, "fit-semi": _run_fit_semi, "test": _run_test,
    "simulate": _run_simulate, "bench": _run_bench,
}


def run(cfg: dict) -> list:
    """Execute a resolved configuration; returns the written file paths."""
    cmd = cfg["command"]
    if cfg.get("threads") is None:
        cfg["threads"] = default_threads()
    if int(cfg["threads"]) < 1:
        raise ConfigError("--threads must be at least 1")
    outputs, extra = RUNNERS[cmd](cfg)
    manifest = cfg.get("manifest") or _default_manifest(cfg)
    rerun = {k: v for k, v in cfg.items() if k not in ("config", "manifest")}
    _write_json(manifest, {"library": "locavg", "version": __version__, "config": rerun,
                           "outputs": outputs, "summary": extra})
    return outputs + [manifest]


def _default_manifest(cfg) -> str:
    out = Path(cfg["output"])
    if out.suffix in (".csv", ".json"):
        out = out.with_suffix("")
    return f"{out}.manifest.json"


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        run(cfg)
    except LocavgError as err:
        print(f"locavg: error: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"locavg: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
