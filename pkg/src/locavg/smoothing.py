"""Second-stage smoothing of the pointwise estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, EmptyWindow, RankDeficientWindow
from .kernels import Kernel, get_kernel, kernel_constants
from .local_average import LocalAverageFit, check_target, gamma_hat

MAX_WINDOW_DOUBLINGS = 4


@dataclass(frozen=True)
class SmootherSpec:
    kernel: Kernel = Kernel()
    h: float = 0.3
    degree: int = 3

    def __post_init__(self):
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if not (np.isfinite(self.h) and self.h > 0):
            raise ConfigError(f"bandwidth must be positive, got {self.h}")
        if self.degree not in (1, 3):
            raise ConfigError(f"degree must be 1 or 3, got {self.degree}")


@dataclass(frozen=True, eq=False)
class SmoothedCurve:
    grid: np.ndarray
    value: np.ndarray
    band_halfwidth: np.ndarray | None = None
    bias_est: np.ndarray | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise ConfigError("evaluation grid must be strictly increasing")

    @property
    def lower(self):
        return None if self.band_halfwidth is None else self.value - self.band_halfwidth

    @property
    def upper(self):
        return None if self.band_halfwidth is None else self.value + self.band_halfwidth

    def to_csv(self, path_or_stream):
        def nan_col(a):
            return np.full(self.grid.shape, np.nan) if a is None else a

        cols = [self.grid, self.value, nan_col(self.lower), nan_col(self.upper), nan_col(self.bias_est)]
        own = isinstance(path_or_stream, (str, bytes)) or hasattr(path_or_stream, "__fspath__")
        fh = open(path_or_stream, "w", newline="", encoding="utf-8") if own else path_or_stream
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "value", "lower", "upper", "bias_est"])
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])
        finally:
            if own:
                fh.close()


def _as_points(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    return x, y


def _local_poly_fit(x, y, kernel, h, grid, degree):
    """Batched weighted polynomial fits in the scaled, centred basis ((x - u)/h)**j.

    Returns coefficients of shape (G, degree + 1) and a boolean mask of
    grid points where the fit was not possible.
    """
    t = (x[None, :] - grid[:, None]) / h
    w = kernel(t)
    d = degree + 1
    # weighted power sums S_m = sum w t^m, m < 2d - 1, fill the Hankel normal matrix
    s = np.empty((grid.size, 2 * d - 1))
    b = np.empty((grid.size, d))
    wt = w
    for j in range(2 * d - 1):
        s[:, j] = wt.sum(axis=1)
        if j < d:
            b[:, j] = wt @ y
        wt = wt * t
    m = s[:, np.add.outer(np.arange(d), np.arange(d))]
    npos = np.count_nonzero(w > 0, axis=1)
    ok = npos >= d
    if np.any(ok):
        good = spd_condition(m[ok]) < 1e13
        idx = np.flatnonzero(ok)
        ok[idx[~good]] = False
    coef = np.full((grid.size, d), np.nan)
    if np.any(ok):
        coef[ok] = np.linalg.solve(m[ok], b[ok][:, :, None])[:, :, 0]
    return coef, ok, npos


def spd_condition(m: np.ndarray) -> np.ndarray:
    """Condition numbers of a stack of symmetric positive semidefinite matrices
    (``inf`` when singular)."""
    ev = np.linalg.eigvalsh(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = ev[..., -1] / ev[..., 0]
    return np.where((ev[..., 0] > 0) & np.isfinite(cond), cond, np.inf)


def local_poly(x, y, spec: SmootherSpec, u, expand_window: bool = False, deriv_order: int | None = None):
    """Local polynomial regression of ``y`` on ``x`` evaluated at ``u``.

    Fits a kernel-weighted polynomial of ``spec.degree`` in ``(x - u)`` and
    returns its intercept. ``u`` may be a scalar or an array.

    Parameters
    ----------
    expand_window : bool
        Where fewer than ``degree + 1`` points carry positive weight, double
        the bandwidth at that point (at most four times) instead of raising.
    deriv_order : int, optional
        Fit with this polynomial degree instead of ``spec.degree``; used for
        derivative pilots.

    Raises
    ------
    EmptyWindow, RankDeficientWindow
    """
    x, y = _as_points(x, y)
    grid = np.atleast_1d(np.asarray(u, dtype=float))
    degree = spec.degree if deriv_order is None else deriv_order
    coef = _fit_with_expansion(x, y, spec.kernel, spec.h, grid, degree, expand_window)
    out = coef[:, 0]
    return float(out[0]) if np.ndim(u) == 0 else out


def _fit_with_expansion(x, y, kernel, h, grid, degree, expand_window):
    coef, ok, npos = _local_poly_fit(x, y, kernel, h, grid, degree)
    if not expand_window:
        _raise_for_failures(grid, ok, npos, degree)
        return coef
    hh = h
    for _ in range(MAX_WINDOW_DOUBLINGS):
        if ok.all():
            break
        hh *= 2.0
        bad = np.flatnonzero(~ok)
        c2, ok2, n2 = _local_poly_fit(x, y, kernel, hh, grid[bad], degree)
        # rescale coefficients of the wider fit back to the original basis
        coef[bad] = c2 * (h / hh) ** np.arange(degree + 1)
        ok[bad] = ok2
        npos[bad] = n2
    _raise_for_failures(grid, ok, npos, degree)
    return coef


def _raise_for_failures(grid, ok, npos, degree):
    if ok.all():
        return
    i = int(np.flatnonzero(~ok)[0])
    if npos[i] == 0:
        raise EmptyWindow(float(grid[i]))
    raise RankDeficientWindow(float(grid[i]), int(npos[i]), degree + 1)


def nadaraya_watson(x, y, kernel: Kernel | str | None, h: float, u):
    """Kernel-weighted local average of ``y`` at ``u``."""
    x, y = _as_points(x, y)
    kern = get_kernel(kernel)
    grid = np.atleast_1d(np.asarray(u, dtype=float))
    w = kern((x[None, :] - grid[:, None]) / h)
    tot = w.sum(axis=1)
    if np.any(tot <= 0):
        raise EmptyWindow(float(grid[np.flatnonzero(tot <= 0)[0]]))
    out = (w @ y) / tot
    return float(out[0]) if np.ndim(u) == 0 else out


def kde(values, kernel: Kernel | str | None, h: float, u):
    """Kernel density estimate ``(1/(m h)) sum_j K((u - v_j)/h)``."""
    v = np.asarray(values, dtype=float).ravel()
    kern = get_kernel(kernel)
    grid = np.atleast_1d(np.asarray(u, dtype=float))
    dens = kern((grid[:, None] - v[None, :]) / h).sum(axis=1) / (v.size * h)
    return float(dens[0]) if np.ndim(u) == 0 else dens


def silverman_bandwidth(values) -> float:
    v = np.asarray(values, dtype=float)
    sd = v.std(ddof=1) if v.size > 1 else 0.0
    if sd <= 0:
        sd = 1.0
    return 1.06 * sd * v.size ** (-0.2)


def plugin_variance(fit: LocalAverageFit, target: int, spec: SmootherSpec, grid) -> np.ndarray:
    """Asymptotic variance of the smoothed curve with sigma^2, Gamma and f_U plugged in."""
    grid = np.asarray(grid, dtype=float)
    kc = kernel_constants(spec.kernel)
    factor = kc.local_cubic_variance_factor if spec.degree == 3 else kc.nu[0]
    gam = np.atleast_1d(gamma_hat(fit, target, spec.kernel, spec.h)(grid))
    f_u = kde(fit.u_bar, spec.kernel, silverman_bandwidth(fit.u_bar), grid)
    f_u = np.atleast_1d(f_u)
    with np.errstate(divide="ignore"):
        return factor * fit.sigma2_hat * fit.group_size / (fit.n * spec.h * f_u) * gam


def smooth_coefficient(
    fit: LocalAverageFit,
    target: int,
    spec: SmootherSpec,
    grid,
    alpha: float | None = 0.05,
    expand_window: bool = False,
    with_bias: bool = True,
) -> SmoothedCurve:
    """Smooth one coefficient's pointwise estimates over ``grid``.

    Bands are pointwise normal intervals ``value +/- z_{1-alpha/2} sd``
    without bias correction; the plug-in leading bias is reported in
    ``bias_est`` (NaN where the higher-degree pilot fit is not possible).
    Pass ``alpha=None`` to skip the bands.
    """
    t = check_target(target, fit.p)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    x, y = fit.u_bar, fit.a_hat[:, t]
    coef = _fit_with_expansion(x, y, spec.kernel, spec.h, grid, spec.degree, expand_window)
    value = coef[:, 0]

    half = None
    if alpha is not None:
        z = stats.norm.ppf(1 - alpha / 2)
        half = z * np.sqrt(plugin_variance(fit, t, spec, grid))

    bias = None
    if with_bias:
        kc = kernel_constants(spec.kernel)
        hi, _, _ = _local_poly_fit(x, y, spec.kernel, spec.h, grid, spec.degree + 2)
        if spec.degree == 1:
            # c2 = a''(u) h^2 / 2
            bias = kc.xi[2] * hi[:, 2]
        else:
            # c4 = a''''(u) h^4 / 24
            bias = kc.local_cubic_bias_factor * 24.0 * hi[:, 4]
    return SmoothedCurve(grid=grid, value=value, band_halfwidth=half, bias_est=bias, alpha=alpha)


def default_grid(u_bar, size: int) -> np.ndarray:
    return np.linspace(float(np.min(u_bar)), float(np.max(u_bar)), int(size))
