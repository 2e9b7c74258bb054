import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from locavg.design import sort_and_group
from locavg.errors import ConfigError, EmptyWindow, RankDeficientWindow
from locavg.kernels import Kernel, kernel_constants
from locavg.local_average import fit_groups
from locavg.sim import DGP, generate, integrated_squared_error, mise_grid
from locavg.smoothing import (
    SmoothedCurve, SmootherSpec, kde, local_poly, nadaraya_watson, plugin_variance,
    silverman_bandwidth, smooth_coefficient,
)

from conftest import make_varying


def weighted_ls_oracle(x, y, u, h, degree, kernel=Kernel()):
    """Dense weighted least squares in the raw basis (x - u)^j."""
    w = kernel((x - u) / h)
    design = np.vander(x - u, degree + 1, increasing=True)
    coef = np.linalg.lstsq(design * np.sqrt(w)[:, None], y * np.sqrt(w), rcond=None)[0]
    return coef[0]


class TestSmootherSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            SmootherSpec(h=0.0)
        with pytest.raises(ConfigError):
            SmootherSpec(degree=2)


class TestLocalPoly:
    def test_cubic_reproduction(self):
        x = np.linspace(0, 1, 40)
        q = lambda u: 1 + u - 2 * u**3  # noqa: E731
        u = np.linspace(0.05, 0.95, 50)
        for h in (0.15, 0.5, 3.0):
            np.testing.assert_allclose(local_poly(x, q(x), SmootherSpec(h=h, degree=3), u), q(u), atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(coef=st.lists(st.floats(-5, 5), min_size=4, max_size=4), seed=st.integers(0, 1000))
    def test_random_cubics(self, coef, seed):
        x = np.sort(np.random.default_rng(seed).uniform(0, 1, 60))
        poly = np.polynomial.Polynomial(coef)
        u = np.linspace(0.2, 0.8, 50)
        np.testing.assert_allclose(local_poly(x, poly(x), SmootherSpec(h=0.3), u), poly(u), atol=1e-9)

    def test_linear_reproduction_and_constants(self):
        x = np.linspace(0, 1, 30)
        spec = SmootherSpec(h=0.2, degree=1)
        u = np.linspace(0.1, 0.9, 20)
        np.testing.assert_allclose(local_poly(x, 3 - 2 * x, spec, u), 3 - 2 * u, atol=1e-12)
        np.testing.assert_allclose(local_poly(x, np.full(30, 4.2), spec, u), 4.2, atol=1e-12)

    def test_weights_sum_to_one(self, rng):
        x = rng.uniform(0, 1, 50)
        out = local_poly(x, np.ones(50), SmootherSpec(h=0.25), np.linspace(0.2, 0.8, 15))
        np.testing.assert_allclose(out, 1.0, atol=1e-10)

    def test_matches_dense_oracle(self, rng):
        x = rng.uniform(0, 1, 7)
        y = rng.standard_normal(7)
        x[:3] = [0.35, 0.5, 0.6]
        got = local_poly(x, y, SmootherSpec(h=0.3, degree=1), 0.5)
        assert got == pytest.approx(weighted_ls_oracle(x, y, 0.5, 0.3, 1), rel=1e-10)

    def test_scalar_and_array(self):
        x = np.linspace(0, 1, 20)
        assert isinstance(local_poly(x, x, SmootherSpec(h=0.3), 0.5), float)
        assert local_poly(x, x, SmootherSpec(h=0.3), [0.5]).shape == (1,)

    def test_empty_window(self):
        with pytest.raises(EmptyWindow):
            local_poly(np.linspace(0, 1, 20), np.zeros(20), SmootherSpec(h=0.1), 3.0)

    def test_rank_deficient(self):
        x = np.array([0.0, 0.1, 0.2, 0.9, 1.0])
        with pytest.raises(RankDeficientWindow) as exc:
            local_poly(x, x, SmootherSpec(h=0.15, degree=3), 0.1)
        assert exc.value.required == 4

    def test_expand_window(self):
        x = np.array([0.0, 0.1, 0.2, 0.5, 0.9, 1.0])
        got = local_poly(x, 2 * x**3, SmootherSpec(h=0.15, degree=3), 0.1, expand_window=True)
        assert got == pytest.approx(2 * 0.1**3, abs=1e-10)


class TestNadarayaWatson:
    def test_constant(self):
        assert nadaraya_watson(np.linspace(0, 1, 9), np.full(9, 2.5), None, 0.3, 0.4) == pytest.approx(2.5)

    def test_symmetric_pair(self):
        assert nadaraya_watson([0.4, 0.6], [1.0, 3.0], None, 0.5, 0.5) == pytest.approx(2.0)

    def test_hand_ratio(self):
        x = np.array([0.1, 0.3, 0.45, 0.6, 0.9])
        y = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        t = (x - 0.4) / 0.25
        w = np.where(np.abs(t) <= 1, 0.75 * (1 - t**2), 0.0)
        assert nadaraya_watson(x, y, "epanechnikov", 0.25, 0.4) == pytest.approx(w @ y / w.sum())

    @given(seed=st.integers(0, 10_000), u=st.floats(0, 1))
    def test_within_range(self, seed, u):
        r = np.random.default_rng(seed)
        x, y = r.uniform(0, 1, 20), r.standard_normal(20)
        inside = np.abs(x - u) < 0.4
        if not inside.any():
            return
        v = nadaraya_watson(x, y, None, 0.4, u)
        assert y[inside].min() - 1e-12 <= v <= y[inside].max() + 1e-12

    def test_empty(self):
        with pytest.raises(EmptyWindow):
            nadaraya_watson([0.0, 0.1], [1.0, 2.0], None, 0.05, 0.5)


class TestKde:
    def test_single_point(self):
        assert kde([0.3], "epanechnikov", 0.2, 0.3) == pytest.approx(0.75 / 0.2)

    def test_uniform_density(self):
        v = np.linspace(0, 1, 10_000)
        np.testing.assert_allclose(kde(v, None, 0.05, np.array([0.3, 0.5, 0.7])), 1.0, atol=0.02)

    def test_outside(self):
        assert kde([0.1, 0.2], None, 0.05, 5.0) == 0.0

    def test_integrates_to_one(self, rng):
        v = rng.normal(size=500)
        grid = np.linspace(-6, 6, 4001)
        assert trapezoid(kde(v, None, 0.3, grid), grid) == pytest.approx(1.0, abs=0.01)

    def test_silverman(self):
        v = np.arange(32.0)
        assert silverman_bandwidth(v) == pytest.approx(1.06 * v.std(ddof=1) * 32 ** -0.2)


class TestSmoothCoefficient:
    @pytest.fixture
    def fit(self, rng):
        return fit_groups(sort_and_group(make_varying(rng, n=600, p=2, noise=0.3), 10))

    def test_band_uses_normal_quantile(self, fit):
        grid = np.linspace(0.2, 0.8, 7)
        spec = SmootherSpec(h=0.3, degree=3)
        curve = smooth_coefficient(fit, 1, spec, grid, alpha=0.05)
        sd = np.sqrt(plugin_variance(fit, 1, spec, grid))
        np.testing.assert_allclose(curve.band_halfwidth, 1.959964 * sd, rtol=1e-6)
        assert np.all(curve.upper >= curve.lower)

    def test_degree_one_variance_formula(self, rng):
        # same n, I = 5 versus I = 10, against a direct evaluation of nu0 sigma^2 I Gamma / (n h f)
        d = make_varying(rng, n=1000, p=1, noise=0.5)
        grid = np.array([0.3, 0.5, 0.7])
        spec = SmootherSpec(h=0.25, degree=1)
        out = {}
        for size in (5, 10):
            f = fit_groups(sort_and_group(d, size))
            gam = nadaraya_watson(f.u_bar, f.gram_inv[:, 0, 0], None, 0.25, grid)
            dens = kde(f.u_bar, None, 1.06 * f.u_bar.std(ddof=1) * f.k ** -0.2, grid)
            oracle = 0.6 * f.sigma2_hat * size / (1000 * 0.25 * dens) * gam
            out[size] = plugin_variance(f, 0, spec, grid)
            np.testing.assert_allclose(out[size], oracle, rtol=1e-12)
        # Gamma roughly halves (1/(I-2)), I doubles: ratio near (10/8)/(5/3)
        np.testing.assert_allclose(out[10] / out[5], (10 / 8) / (5 / 3), rtol=0.25)

    def test_degree_three_constant(self, fit):
        grid = np.array([0.5])
        v3 = plugin_variance(fit, 1, SmootherSpec(h=0.3, degree=3), grid)
        v1 = plugin_variance(fit, 1, SmootherSpec(h=0.3, degree=1), grid)
        kc = kernel_constants("epanechnikov")
        assert v3[0] / v1[0] == pytest.approx(kc.local_cubic_variance_factor / kc.nu[0])

    def test_bias_estimate_on_quadratic(self):
        # exact quadratic pseudo-data: degree 1 bias is xi2 a'' h^2 / 2 = 0.2 * 2 * h^2 / 2
        r = np.random.default_rng(3)
        from locavg.design import Dataset

        n = 400
        u = r.uniform(0, 1, n)
        x = np.ones((n, 1))
        g = sort_and_group(Dataset(u, x, u**2 + 1e-6 * r.standard_normal(n)), 4)
        fit = fit_groups(g)
        curve = smooth_coefficient(fit, 0, SmootherSpec(h=0.2, degree=1), np.array([0.5]), alpha=None)
        assert curve.bias_est[0] == pytest.approx(0.2 * 0.2**2, rel=0.05)
        assert curve.band_halfwidth is None

    def test_csv(self, fit):
        curve = smooth_coefficient(fit, 1, SmootherSpec(h=0.3), np.linspace(0.2, 0.8, 5))
        buf = io.StringIO()
        curve.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "u,value,lower,upper,bias_est"
        assert len(lines) == 6

    def test_grid_must_increase(self):
        with pytest.raises(ConfigError):
            SmoothedCurve(grid=np.array([0.2, 0.1]), value=np.zeros(2))

    @pytest.mark.slow
    def test_example_two_mise(self):
        grid = mise_grid()
        spec = SmootherSpec(h=0.8, degree=3)
        ise = []
        for rep in range(50):
            dgp = DGP(2, 1000, 11, rep=rep)
            f = fit_groups(sort_and_group(generate(dgp), 10))
            est = smooth_coefficient(f, 1, spec, grid, alpha=None, with_bias=False).value
            ise.append(integrated_squared_error(est, dgp.target_curve(grid), grid))
        assert np.mean(ise) <= 0.02
