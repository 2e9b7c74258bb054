"""Simulation designs, Monte Carlo studies and the timing benchmark."""

from __future__ import annotations

import csv
import functools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .baselines import BaselineSpec, evaluate as evaluate_baseline, one_step_grid
from .constancy import TestResult, test_t1, test_t2, test_t3
from .design import Dataset, GroupedDesign, sort_and_group
from .errors import ConfigError, LocavgError
from .kernels import get_kernel
from .local_average import fit_groups, gamma_hat, to_pointwise_model
from .semivarying import fit_joint, fit_lape
from .smoothing import SmootherSpec, smooth_coefficient

THREADS_ENV = "LOCAVG_THREADS"
SNR_FRACTION = 0.2  # sigma^2 = 0.2 Var[m]
CALIBRATION_DRAWS = 1_000_000
CALIBRATION_SEED = 20_240_601
MISE_GRID = (0.05, 0.95)
RHO_12 = 2.0**-0.5


def _bump(u):
    return 3.5 * (np.exp(-((4 * u - 1) ** 2)) + np.exp(-((4 * u - 3) ** 2))) - 1.5


def coefficient_functions(example_id: int, a_param: float | None = None):
    """Varying coefficients ``(a_1, a_2)`` of an example as vectorised callables."""
    two_pi = 2 * np.pi
    if example_id == 1:
        return (lambda u: np.sin(60 * u), lambda u: 4 * u * (1 - u))
    if example_id == 2:
        return (lambda u: np.sin(6 * np.pi * u), lambda u: np.sin(two_pi * u))
    if example_id == 3:
        return (lambda u: np.sin(8 * np.pi * (u - 0.5)), _bump)
    if example_id == 4:
        return (lambda u: np.sin(two_pi * u), lambda u: np.cos(two_pi * u))
    if example_id == 5:
        return (lambda u: np.sin(two_pi * u), _bump)
    if example_id == 6:
        return (lambda u: np.sin(6 * np.pi * (u - 0.5)), lambda u: np.sin(two_pi * u))
    if example_id in (7, 8):
        a = 0.0 if a_param is None else float(a_param)
        if example_id == 7:
            return (lambda u: np.sin(60 * u), lambda u: a * 4 * u * (1 - u) + (1 - a))
        return (lambda u: np.sin(6 * np.pi * u), lambda u: a * np.sin(two_pi * u) + (1 - a))
    raise ConfigError(f"example id must be 1..8, got {example_id}")


def has_constant_part(example_id: int) -> bool:
    return example_id in (4, 5, 6)


def _draw(example_id: int, n: int, rng: np.random.Generator, a_param=None):
    """Noise-free part of an example: ``(u, x, z, m)``."""
    u = rng.uniform(0.0, 1.0, n)
    if example_id in (1, 2, 3):
        e = rng.standard_normal((n, 2))
        x = np.column_stack([e[:, 0], RHO_12 * e[:, 0] + np.sqrt(1 - RHO_12**2) * e[:, 1]])
        z = None
    elif has_constant_part(example_id):
        x = rng.standard_normal((n, 2))
        z = rng.standard_normal((n, 1))
    else:
        x = rng.standard_normal((n, 2))
        z = None
    a1, a2 = coefficient_functions(example_id, a_param)
    m = a1(u) * x[:, 0] + a2(u) * x[:, 1]
    if z is not None:
        m = m + z[:, 0]
    return u, x, z, m


@functools.lru_cache(maxsize=None)
def noise_sigma(example_id: int) -> float:
    """``sqrt(0.2 Var[m(U, X)])`` by Monte Carlo with a fixed internal seed.

    Examples 7 and 8 are calibrated at ``a_param = 0`` and keep that noise
    level across the alternative sweep.
    """
    rng = np.random.default_rng(CALIBRATION_SEED + example_id)
    *_, m = _draw(example_id, CALIBRATION_DRAWS, rng, 0.0)
    return float(np.sqrt(SNR_FRACTION * m.var()))


@dataclass(frozen=True)
class DGP:
    """One simulated sample.

    ``rep`` selects an independent stream derived from ``seed``; ``sigma``
    overrides the calibrated noise scale.
    """

    example_id: int
    n: int
    seed: int = 0
    a_param: float | None = None
    sigma: float | None = None
    rep: int | None = None

    def __post_init__(self):
        coefficient_functions(self.example_id)
        if self.n < 2:
            raise ConfigError(f"n must be at least 2, got {self.n}")
        if (self.a_param is not None) != (self.example_id in (7, 8)):
            raise ConfigError("a_param is required for examples 7 and 8 and only for them")
        if self.a_param is not None and not 0.0 <= self.a_param <= 1.0:
            raise ConfigError(f"a_param must lie in [0, 1], got {self.a_param}")
        if self.sigma is not None and not self.sigma >= 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")

    @property
    def noise(self) -> float:
        return noise_sigma(self.example_id) if self.sigma is None else float(self.sigma)

    def rng(self) -> np.random.Generator:
        if self.rep is None:
            return np.random.default_rng(self.seed)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.rep,)))

    def replicate(self, rep: int) -> "DGP":
        return DGP(self.example_id, self.n, self.seed, self.a_param, self.sigma, rep)

    def target_curve(self, u):
        return coefficient_functions(self.example_id, self.a_param)[1](np.asarray(u, dtype=float))


def generate(dgp: DGP) -> Dataset:
    """Draw a dataset; identical ``DGP`` values give identical data."""
    rng = dgp.rng()
    u, x, z, m = _draw(dgp.example_id, dgp.n, rng, dgp.a_param)
    y = m + dgp.noise * rng.standard_normal(dgp.n)
    return Dataset(u=u, x=x, y=y, z=z, x_names=("x1", "x2"), z_names=("x3",) if z is not None else ())


def partially_linear(n: int, seed: int = 0, rep: int | None = None, sigma: float = 0.5, b: float = 1.0):
    """``Y = a(U) + b Z + sigma e`` with ``a(u) = sin(2 pi u)`` and ``Z, U, e`` independent."""
    ss = seed if rep is None else np.random.SeedSequence(seed, spawn_key=(rep,))
    rng = np.random.default_rng(ss)
    u = rng.uniform(0.0, 1.0, n)
    z = rng.standard_normal(n)
    y = np.sin(2 * np.pi * u) + b * z + sigma * rng.standard_normal(n)
    return Dataset(u=u, x=np.ones((n, 1)), y=y, z=z, x_names=("intercept",), z_names=("z",))


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(val, 1)


def parallel_map(fn, items, threads: int | None = None) -> list:
    """``[fn(i) for i in items]`` computed on up to ``threads`` threads, in order."""
    threads = default_threads() if threads is None else int(threads)
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _tag_failure(err: LocavgError, dgp: DGP):
    err.replication = dgp.rep
    err.seed = dgp.seed
    err.args = (f"{err.args[0] if err.args else err} [seed {dgp.seed}, replication {dgp.rep}]",)


@dataclass
class StudyReport:
    """Aggregated results of a Monte Carlo study or benchmark.

    ``rows`` hold per-configuration aggregates; ``samples`` optional
    per-replication values (for instance standardised statistics); wall
    times are kept apart in ``timings`` so the rest is reproducible.
    """

    kind: str
    rows: list
    reps: int
    seed: int
    config: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def columns(self) -> list:
        cols = []
        for row in self.rows:
            cols.extend(c for c in row if c not in cols)
        return cols

    def to_csv(self, path_or_stream):
        cols = self.columns()
        own = isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__")
        fh = open(path_or_stream, "w", newline="", encoding="utf-8") if own else path_or_stream
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.rows:
                w.writerow([_fmt(row.get(c, "")) for c in cols])
        finally:
            if own:
                fh.close()

    def to_dict(self, include_timings: bool = False) -> dict:
        from .constancy import _jsonable

        out = {
            "kind": self.kind, "reps": self.reps, "seed": self.seed,
            "config": self.config, "rows": self.rows, "samples": self.samples,
        }
        if include_timings:
            out["timings"] = self.timings
        return _jsonable(out)

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


@dataclass(frozen=True)
class LocalAverageSpec:
    """The local average curve estimator: group size and second-stage smoother."""

    group_size: int = 10
    smoother: SmootherSpec = SmootherSpec()
    expand_window: bool = False


def estimate_curve(spec, data: Dataset, grid, target: int = -1) -> np.ndarray:
    """Target-coefficient curve on ``grid`` from a local average or baseline spec."""
    if isinstance(spec, LocalAverageSpec):
        fit = fit_groups(sort_and_group(data, spec.group_size))
        curve = smooth_coefficient(
            fit, target, spec.smoother, grid, alpha=None,
            expand_window=spec.expand_window, with_bias=False,
        )
        return curve.value
    if isinstance(spec, BaselineSpec):
        return evaluate_baseline(data, grid, spec, target)
    raise ConfigError(f"unsupported estimator spec {type(spec).__name__}")


def _label(spec) -> str:
    if isinstance(spec, LocalAverageSpec):
        return "local_average"
    return spec.kind


def _spec_config(spec) -> dict:
    if isinstance(spec, LocalAverageSpec):
        sm = spec.smoother
        return {"estimator": "local_average", "group_size": spec.group_size, "h": sm.h,
                "degree": sm.degree, "kernel": sm.kernel.family}
    return {"estimator": spec.kind, "h": spec.h, "h0": spec.h0, "degree": spec.degree,
            "kernel": spec.kernel.family}


def mise_grid(size: int = 91) -> np.ndarray:
    return np.linspace(MISE_GRID[0], MISE_GRID[1], size)


def integrated_squared_error(estimate, truth, grid) -> float:
    return float(trapezoid((np.asarray(estimate) - np.asarray(truth)) ** 2, grid))


def mise_study(specs, dgp: DGP, grid=None, reps: int = 100, threads: int | None = None) -> StudyReport:
    """MISE of each estimator for the second coefficient over ``reps`` replications.

    Every estimator sees the same replicated datasets.
    """
    if reps < 2:
        raise ConfigError("a MISE study needs at least 2 replications")
    specs = list(specs) if isinstance(specs, (list, tuple)) else [specs]
    grid = mise_grid() if grid is None else np.asarray(grid, dtype=float)
    truth = dgp.target_curve(grid)

    def one(rep):
        d = dgp.replicate(rep)
        data = generate(d)
        try:
            return [integrated_squared_error(estimate_curve(s, data, grid), truth, grid) for s in specs]
        except LocavgError as err:
            _tag_failure(err, d)
            raise

    ise = np.asarray(parallel_map(one, range(reps), threads))
    rows = []
    for j, s in enumerate(specs):
        col = ise[:, j]
        rows.append({
            **_spec_config(s), "n": dgp.n, "example": dgp.example_id, "reps": reps,
            "mise": float(col.mean()), "mise_sd": float(col.std(ddof=1)),
        })
    return StudyReport(
        kind="mise", rows=rows, reps=reps, seed=dgp.seed,
        config={"example": dgp.example_id, "n": dgp.n, "grid": [float(grid[0]), float(grid[-1]), grid.size]},
        samples={_label(s) + f"@h={_spec_config(s)['h']}": ise[:, j].tolist() for j, s in enumerate(specs)},
    )


def constant_study(
    dgp: DGP, group_sizes=(10,), reps: int = 100, method: str = "projection", threads: int | None = None
) -> StudyReport:
    """Mean, standard deviation and MSE of the constant coefficient estimate (true value 1)."""
    if not has_constant_part(dgp.example_id):
        raise ConfigError("constant-coefficient study needs example 4, 5 or 6")
    fitter = {"projection": fit_lape, "joint": fit_joint}.get(method)
    if fitter is None:
        raise ConfigError(f"unknown method {method!r}")
    group_sizes = list(group_sizes)

    def one(rep):
        d = dgp.replicate(rep)
        data = generate(d)
        try:
            return [float(fitter(sort_and_group(data, g)).b_hat[0]) for g in group_sizes]
        except LocavgError as err:
            _tag_failure(err, d)
            raise

    est = np.asarray(parallel_map(one, range(reps), threads))
    rows = []
    for j, g in enumerate(group_sizes):
        b = est[:, j]
        rows.append({
            "example": dgp.example_id, "n": dgp.n, "group_size": g, "method": method, "reps": reps,
            "mean": float(b.mean()), "sd": float(b.std(ddof=1)), "mse": float(np.mean((b - 1.0) ** 2)),
        })
    return StudyReport(
        kind="constant", rows=rows, reps=reps, seed=dgp.seed,
        config={"example": dgp.example_id, "n": dgp.n, "method": method},
        samples={f"I={g}": est[:, j].tolist() for j, g in enumerate(group_sizes)},
    )


@dataclass(frozen=True)
class TestSpec:
    """Which constancy tests to run and with which tuning.

    Bandwidths default to ``n^(-2/5)`` for T1 and ``n^(-1/5)`` for T2.
    """

    __test__ = False

    tests: tuple = ("t1", "t2", "t3")
    group_size: int = 10
    kernel: str = "epanechnikov"
    target: int = -1
    h1: float | None = None
    h2: float | None = None
    weighted_t2: bool = True

    def __post_init__(self):
        bad = set(self.tests) - {"t1", "t2", "t3"}
        if bad:
            raise ConfigError(f"unknown tests {sorted(bad)}")
        get_kernel(self.kernel)

    def bandwidths(self, n: int):
        h1 = n ** (-2 / 5) if self.h1 is None else self.h1
        h2 = n ** (-1 / 5) if self.h2 is None else self.h2
        return h1, h2


def run_tests(design: GroupedDesign, spec: TestSpec) -> dict:
    """Run the requested tests on one grouped design; returns ``{name: TestResult}``."""
    h1, h2 = spec.bandwidths(design.n)
    out: dict[str, TestResult] = {}
    fit = None
    if "t1" in spec.tests or "t2" in spec.tests:
        fit = fit_groups(design)
        pts = to_pointwise_model(fit, spec.target)
    if "t1" in spec.tests:
        out["t1"] = test_t1(pts, spec.kernel, h1)
    if "t2" in spec.tests:
        gam = gamma_hat(fit, spec.target, spec.kernel, h2)
        out["t2"] = test_t2(
            pts, spec.kernel, h2, weighted=spec.weighted_t2, gamma=gam, sigma2=fit.sigma2_hat
        )
    if "t3" in spec.tests:
        out["t3"] = test_t3(design, spec.target)
    return out


def size_power_study(
    spec: TestSpec,
    dgp: DGP,
    a_values=None,
    alpha: float = 0.05,
    reps: int = 1000,
    threads: int | None = None,
) -> StudyReport:
    """Rejection rates of the constancy tests, one row per ``a_param`` value.

    ``samples`` keeps the standardised statistics (and, for T3, the
    chi-square-scaled statistic) of every replication.
    """
    if reps < 1:
        raise ConfigError("reps must be positive")
    if dgp.example_id in (7, 8):
        a_values = [dgp.a_param] if a_values is None else list(a_values)
    else:
        a_values = [None]
    rows, samples = [], {}
    for a in a_values:
        base = dgp if a is None else DGP(dgp.example_id, dgp.n, dgp.seed, float(a), dgp.sigma)

        def one(rep, base=base):
            d = base.replicate(rep)
            try:
                return run_tests(sort_and_group(generate(d), spec.group_size), spec)
            except LocavgError as err:
                _tag_failure(err, d)
                raise

        results = parallel_map(one, range(reps), threads)
        row = {"example": dgp.example_id, "n": dgp.n, "a_param": a, "group_size": spec.group_size,
               "alpha": alpha, "reps": reps}
        key = "null" if a is None else f"a={a:g}"
        for name in spec.tests:
            pv = np.array([r[name].p_value for r in results])
            row[f"reject_{name}"] = float(np.mean(pv < alpha))
            samples[f"{key}/{name}"] = [r[name].standardized for r in results]
            if name == "t3":
                samples[f"{key}/t3_chi2"] = [r[name].alternatives["chi2"]["standardized"] for r in results]
                row["reject_t3_chi2"] = float(
                    np.mean([r[name].alternatives["chi2"]["p_value"] < alpha for r in results])
                )
        rows.append(row)
    h1, h2 = spec.bandwidths(dgp.n)
    return StudyReport(
        kind="size_power", rows=rows, reps=reps, seed=dgp.seed,
        config={"example": dgp.example_id, "n": dgp.n, "tests": list(spec.tests), "h1": h1, "h2": h2,
                "kernel": spec.kernel, "weighted_t2": spec.weighted_t2, "target": spec.target},
        samples=samples,
    )


def density_trace(values, grid_size: int = 201):
    """Kernel density of standardised statistics for plotting: ``(x, density)``."""
    from .smoothing import kde, silverman_bandwidth

    v = np.asarray(values, dtype=float)
    x = np.linspace(-4.0, 4.0, grid_size)
    return x, np.atleast_1d(kde(v, "epanechnikov", 2.0 * silverman_bandwidth(v), x))


def local_average_pipeline(data: Dataset, group_size: int, smoother: SmootherSpec, grid, target: int = -1):
    """Sort, group, fit and smooth with bands and bias: the full curve pipeline."""
    fit = fit_groups(sort_and_group(data, group_size))
    return smooth_coefficient(fit, target, smoother, grid, alpha=0.05, with_bias=True)


def _median_time(fn, reps: int) -> tuple[float, object]:
    out = fn()  # warm-up, excluded
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


def timing_bench(
    dgp: DGP,
    grid_size: int = 100,
    reps: int = 20,
    group_size: int = 10,
    h: float = 0.3,
    degree: int = 3,
    kernel: str = "epanechnikov",
    estimators=("local_average", "one_step", "lape"),
) -> StudyReport:
    """Median wall time of each estimator on one dataset.

    ``local_average`` times the full curve pipeline on ``grid_size`` points;
    ``one_step`` the one-step grid evaluation (local linear); ``two_step``
    the pilot plus cubic stage; ``lape`` the constant-coefficient fit on an
    example with a constant part (example 4 is used otherwise).
    Deterministic summaries of the computed estimates go in ``rows``.
    """
    grid = mise_grid(grid_size)
    data = generate(dgp)
    smoother = SmootherSpec(kernel, h, degree)
    timings, rows = {}, []
    for name in estimators:
        if name == "local_average":
            fn = functools.partial(local_average_pipeline, data, group_size, smoother, grid)
            summarize = lambda c: float(np.sum(c.value))  # noqa: E731
        elif name == "one_step":
            fn = functools.partial(one_step_grid, data, grid, kernel, h, 1)
            summarize = lambda c: float(np.sum(c[:, -1]))  # noqa: E731
        elif name == "two_step":
            fn = functools.partial(evaluate_baseline, data, grid, BaselineSpec("two_step", kernel, h))
            summarize = lambda c: float(np.sum(c))  # noqa: E731
        elif name == "lape":
            semi_dgp = dgp if has_constant_part(dgp.example_id) else DGP(4, dgp.n, dgp.seed)
            design = sort_and_group(generate(semi_dgp), group_size)
            fn = functools.partial(fit_lape, design, False)
            summarize = lambda f: float(f.b_hat[0])  # noqa: E731
        else:
            raise ConfigError(f"unknown estimator {name!r}")
        med, out = _median_time(fn, reps)
        timings[name] = med
        rows.append({"estimator": name, "n": dgp.n, "grid_size": grid_size, "summary": summarize(out)})
    if "local_average" in timings and "one_step" in timings:
        timings["speedup_local_average_vs_one_step"] = timings["one_step"] / timings["local_average"]
    return StudyReport(
        kind="bench", rows=rows, reps=reps, seed=dgp.seed,
        config={"example": dgp.example_id, "n": dgp.n, "group_size": group_size, "h": h,
                "degree": degree, "kernel": kernel, "grid_size": grid_size},
        timings=timings,
    )


def scaling_bench(example_id: int = 1, n: int = 100_000, seed: int = 0, group_size: int = 10, reps: int = 7):
    """Median local-average fit time at ``n`` and ``2n``; returns ``(t_n, t_2n)``."""
    out = []
    for m in (n, 2 * n):
        design = sort_and_group(generate(DGP(example_id, m, seed)), group_size)
        med, _ = _median_time(functools.partial(fit_groups, design), reps)
        out.append(med)
    return tuple(out)
