"""Acceptance criteria, each checked at its stated tolerance and time budget.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion lines
as they happen; a summary is also printed at the end of any run.
"""

import json
import time

import numpy as np
import pytest
from scipy import integrate, stats

from locavg.baselines import BaselineSpec
from locavg.cli import main
from locavg.design import Dataset, sort_and_group
from locavg.kernels import kernel_constants
from locavg.semivarying import ProjectionOperator, fit_joint, fit_lape
from locavg.sim import (
    DGP, LocalAverageSpec, TestSpec, constant_study, mise_study, partially_linear,
    size_power_study, timing_bench,
)
from locavg.smoothing import SmootherSpec, local_poly

# fixed before any acceptance run
SEED = 20241016
CLI_SEED = 42
POWER_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 1))


def epan(t):
    return np.where(np.abs(t) <= 1, 0.75 * (1 - t * t), 0.0)


def unif(t):
    return np.where(np.abs(t) <= 1, 0.5, 0.0)


def quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def kappa2_oracle(k):
    def conv(t):
        lo, hi = max(-1.0, t - 1.0), min(1.0, t + 1.0)
        return quad(lambda s: float(k(s) * k(t - s)), lo, hi) if lo < hi else 0.0

    def integrand(t):
        return (float(k(t)) - 0.5 * conv(t)) ** 2

    return quad(integrand, -2, -1) + quad(integrand, -1, 0) + quad(integrand, 0, 1) + quad(integrand, 1, 2)


@pytest.fixture(scope="module")
def null_study():
    t0 = time.perf_counter()
    rep = size_power_study(TestSpec(), DGP(7, 1600, SEED, a_param=0.0), reps=1000)
    return rep, time.perf_counter() - t0


class TestAcceptance:
    def test_01_kernel_constants(self, acceptance):
        t0 = time.perf_counter()
        kc = kernel_constants("epanechnikov")
        got = {"xi2": kc.xi[2], "xi4": kc.xi[4], "nu0": kc.nu[0], "nu2": kc.nu[2], "nu4": kc.nu[4],
               "kappa1": kc.kappa1}
        oracle = {
            "xi2": quad(lambda t: t**2 * epan(t), -1, 1), "xi4": quad(lambda t: t**4 * epan(t), -1, 1),
            "nu0": quad(lambda t: epan(t) ** 2, -1, 1), "nu2": quad(lambda t: t**2 * epan(t) ** 2, -1, 1),
            "nu4": quad(lambda t: t**4 * epan(t) ** 2, -1, 1),
            "kappa1": 0.75 - 0.5 * quad(lambda t: epan(t) ** 2, -1, 1),
        }
        exact = {"xi2": 0.2, "xi4": 3 / 35, "nu0": 0.6, "nu2": 3 / 35, "nu4": 1 / 35, "kappa1": 0.45}
        uni = kernel_constants("uniform").kappa2
        elapsed = time.perf_counter() - t0
        uni_oracle = kappa2_oracle(unif)
        err = max(max(abs(got[k] - oracle[k]), abs(got[k] - exact[k])) for k in got)
        err = max(err, abs(uni - 5 / 24), abs(uni_oracle - 5 / 24))
        ok = err < 1e-9 and elapsed < 1.0
        acceptance(1, ok, f"max abs error {err:.2e}, uniform kappa2 {uni:.12f}, {elapsed:.3f}s")
        assert ok

    def test_02_joint_equals_projection(self, acceptance):
        t0 = time.perf_counter()
        r = np.random.default_rng(SEED)
        worst_rel, worst_score = 0.0, 0.0
        for _ in range(100):
            size = int(r.choice([4, 5, 10]))
            p, q = int(r.integers(1, 4)), int(r.integers(1, 3))
            n = int(r.integers(10 * size, 501))
            u = r.uniform(size=n)
            x = r.standard_normal((n, p))
            z = r.standard_normal((n, q)) + 0.5 * x[:, :1]
            y = np.cos(3 * u) * x[:, 0] + z @ r.standard_normal(q) + 0.3 * r.standard_normal(n)
            design = sort_and_group(Dataset(u, x, y, z), size)
            a, b = fit_joint(design), fit_lape(design)
            worst_rel = max(worst_rel, float(np.max(np.abs(a.b_hat - b.b_hat) / np.maximum(np.abs(b.b_hat), 1e-300))))
            proj = ProjectionOperator(design.x)
            pz = proj.apply(design.z)
            for fit in (a, b):
                resid = proj.apply(design.y - np.einsum("kiq,q->ki", design.z, fit.b_hat))
                worst_score = max(worst_score, float(np.max(np.abs(np.einsum("kiq,ki->q", pz, resid)))))
        elapsed = time.perf_counter() - t0
        ok = worst_rel <= 1e-8 and worst_score <= 1e-6 and elapsed < 10
        acceptance(2, ok, f"max rel diff {worst_rel:.2e}, max score {worst_score:.2e}, {elapsed:.2f}s")
        assert ok

    def test_03_polynomial_reproduction(self, acceptance):
        t0 = time.perf_counter()
        r = np.random.default_rng(SEED)
        x = np.sort(r.uniform(0, 1, 400))
        pts = np.linspace(0.2, 0.8, 50)
        worst = 0.0
        for _ in range(10):
            c = r.normal(size=4)
            cubic = np.polynomial.polynomial.polyval(x, c)
            fit = local_poly(x, cubic, SmootherSpec(h=0.15, degree=3), pts)
            worst = max(worst, float(np.max(np.abs(fit - np.polynomial.polynomial.polyval(pts, c)))))
            line = c[0] + c[1] * x
            fit1 = local_poly(x, line, SmootherSpec(h=0.15, degree=1), pts)
            worst = max(worst, float(np.max(np.abs(fit1 - (c[0] + c[1] * pts)))))
        elapsed = time.perf_counter() - t0
        ok = worst <= 1e-9 and elapsed < 1.0
        acceptance(3, ok, f"max error {worst:.2e}, {elapsed:.3f}s")
        assert ok

    def test_04_mise_example2(self, acceptance, tmp_path):
        t0 = time.perf_counter()
        dgp = DGP(2, 500, CLI_SEED)
        rep = mise_study(
            [LocalAverageSpec(10, SmootherSpec(h=0.8)), LocalAverageSpec(10, SmootherSpec(h=0.4)),
             BaselineSpec("one_step", h=0.4)],
            dgp, reps=100,
        )
        la08, la04, one04 = (row["mise"] for row in rep.rows)
        # the documented CLI invocation reproduces the h = 0.8 value
        prefix = tmp_path / "mise"
        code = main(["simulate", "--example", "2", "--n", "500", "--reps", "100", "--seed", str(CLI_SEED),
                     "--group-size", "10", "--bandwidth", "0.8", "--output", str(prefix)])
        cli = json.loads((tmp_path / "mise.json").read_text())["rows"][0]["mise"]
        elapsed = time.perf_counter() - t0
        ok = code == 0 and la08 <= 0.02 and la04 < one04 and cli == la08 and elapsed < 300
        acceptance(4, ok, f"LA h=0.8 {la08:.4f}; LA h=0.4 {la04:.4f} vs one-step {one04:.4f}; "
                          f"CLI {cli:.4f}; {elapsed:.1f}s")
        assert ok

    def test_05_constant_example4(self, acceptance):
        t0 = time.perf_counter()
        rep = constant_study(DGP(4, 500, SEED), group_sizes=(10, 4), reps=100)
        r10, r4 = rep.rows
        elapsed = time.perf_counter() - t0
        ok = (0.99 <= r10["mean"] <= 1.01 and 0.02 <= r10["sd"] <= 0.05 and r10["mse"] <= 0.003
              and r4["sd"] > r10["sd"] and elapsed < 180)
        acceptance(5, ok, f"I=10 mean {r10['mean']:.4f} sd {r10['sd']:.4f} mse {r10['mse']:.5f}; "
                          f"I=4 sd {r4['sd']:.4f}; {elapsed:.1f}s")
        assert ok

    def test_06_sizes(self, acceptance, null_study):
        rep, elapsed = null_study
        row = rep.rows[0]
        s1, s2, s3 = row["reject_t1"], row["reject_t2"], row["reject_t3"]
        ok = 0.02 <= s1 <= 0.06 and 0.03 <= s3 <= 0.08 and 0.03 <= s2 <= 0.10 and elapsed < 1200
        acceptance(6, ok, f"size T1 {s1:.3f}, T2 {s2:.3f}, T3 {s3:.3f}; {elapsed:.1f}s")
        assert ok

    def test_07_t3_moments(self, acceptance, null_study):
        rep, elapsed = null_study
        scaled = np.asarray(rep.samples["a=0/t3_chi2"])
        mean, var = scaled.mean(), scaled.var(ddof=1)
        ok = abs(mean / 160 - 1) <= 0.05 and abs(var / 320 - 1) <= 0.15 and elapsed < 600
        acceptance(7, ok, f"mean {mean:.2f} (160 +/- 5%), variance {var:.1f} (320 +/- 15%); {elapsed:.1f}s")
        assert ok

    def test_08_partially_linear_variance(self, acceptance):
        t0 = time.perf_counter()
        sigma, n = 0.5, 2000
        est = np.array([
            fit_lape(sort_and_group(partially_linear(n, SEED, rep, sigma=sigma), 10), back_substitute=False).b_hat[0]
            for rep in range(500)
        ])
        var = n * est.var(ddof=1)
        target = 10 / 9 * sigma**2
        elapsed = time.perf_counter() - t0
        ok = abs(var / target - 1) <= 0.15 and elapsed < 180
        acceptance(8, ok, f"var sqrt(n)(b-b0) {var:.4f} vs {target:.4f} (ratio {var / target:.3f}); {elapsed:.1f}s")
        assert ok

    def test_09_power(self, acceptance):
        t0 = time.perf_counter()
        rep = size_power_study(TestSpec(), DGP(7, 800, SEED, a_param=1.0), a_values=POWER_GRID, reps=500)
        elapsed = time.perf_counter() - t0
        last = rep.rows[-1]
        power = [last[f"reject_{t}"] for t in ("t1", "t2", "t3")]
        rho = []
        for t in ("t1", "t2", "t3"):
            rates = [row[f"reject_{t}"] for row in rep.rows]
            rho.append(float(stats.spearmanr(POWER_GRID, rates)[0]))
        ok = min(power) >= 0.95 and min(rho) > 0.9 and elapsed < 900
        acceptance(9, ok, f"power at a=1 T1/T2/T3 {power[0]:.3f}/{power[1]:.3f}/{power[2]:.3f}; "
                          f"Spearman {rho[0]:.3f}/{rho[1]:.3f}/{rho[2]:.3f}; {elapsed:.1f}s")
        assert ok

    def test_10_timing(self, acceptance):
        t0 = time.perf_counter()
        rep = timing_bench(DGP(1, 500, SEED), grid_size=100, reps=30)
        elapsed = time.perf_counter() - t0
        ratio = rep.timings["speedup_local_average_vs_one_step"]
        lape = rep.timings["lape"]
        ok = ratio >= 3.0 and lape < 0.05 and elapsed < 120
        acceptance(10, ok, f"speed-up {ratio:.2f}x, LAPE median {lape * 1e3:.2f} ms; {elapsed:.1f}s")
        assert ok

    def test_11_determinism(self, acceptance, tmp_path):
        commands = [
            ["simulate", "--example", "2", "--n", "500", "--reps", "20", "--seed", str(SEED), "--compare",
             "one_step,two_step"],
            ["simulate", "--example", "5", "--n", "500", "--reps", "20", "--seed", str(SEED), "--group-sizes",
             "4,10", "--method", "joint"],
            ["simulate", "--example", "8", "--study", "power", "--n", "800", "--reps", "40", "--seed", str(SEED),
             "--a-values", "0,0.5,1"],
            ["bench", "--example", "1", "--n", "500", "--reps", "3", "--seed", str(SEED)],
        ]
        mismatched = []
        for i, cmd in enumerate(commands):
            files = {}
            for threads in ("1", "8"):
                prefix = tmp_path / f"c{i}_t{threads}"
                assert main(cmd + ["--threads", threads, "--output", str(prefix)]) == 0
                files[threads] = prefix
            suffixes = [".csv", ".json"] + (["_density.csv"] if "power" in cmd else [])
            for s in suffixes:
                a = (tmp_path / f"c{i}_t1{s}").read_bytes()
                b = (tmp_path / f"c{i}_t8{s}").read_bytes()
                if a != b:
                    mismatched.append(f"{cmd[0]}#{i}{s}")
        ok = not mismatched
        acceptance(11, ok, f"{len(commands)} commands, threads 1 vs 8, mismatches: {mismatched or 'none'}")
        assert ok
