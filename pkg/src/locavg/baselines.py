"""Reference estimators used in the comparisons.

Both are deliberately plain: every evaluation point runs a kernel-weighted
least-squares fit over all ``n`` observations, with no binning or updating
tricks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import Dataset, check_target
from .errors import ConfigError, EmptyWindow, RankDeficientWindow
from .kernels import Kernel, get_kernel
from .smoothing import SmootherSpec, local_poly, spd_condition


@dataclass(frozen=True)
class BaselineSpec:
    """Settings of a reference estimator.

    ``degree`` is the local polynomial order of the one-step fit (and of the
    pilot of the two-step fit, whose second stage is always cubic). ``h0`` is
    the pilot bandwidth; ``None`` selects ``h / 4`` widened if needed so that
    every pilot window holds at least ``2p`` points.
    """

    kind: str = "one_step"
    kernel: Kernel = Kernel()
    h: float = 0.3
    h0: float | None = None
    degree: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if self.kind not in ("one_step", "two_step"):
            raise ConfigError(f"unknown baseline {self.kind!r}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ConfigError(f"bandwidth must be positive, got {self.h}")
        if self.h0 is not None and not (np.isfinite(self.h0) and self.h0 > 0):
            raise ConfigError(f"pilot bandwidth must be positive, got {self.h0}")
        if self.degree < 0:
            raise ConfigError(f"degree must be non-negative, got {self.degree}")


def one_step_grid(data: Dataset, grid, kernel, h: float, degree: int = 1) -> np.ndarray:
    """Local polynomial estimates of all ``p`` coefficients at each grid point.

    At ``u`` the response is regressed, with weights ``K((U - u)/h)``, on the
    products of ``X`` with ``1, (U - u)/h, ..., ((U - u)/h)^degree``; the
    zero-order terms are returned, shape ``(len(grid), p)``.

    Raises
    ------
    EmptyWindow, RankDeficientWindow
    """
    kern = get_kernel(kernel)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    p, d = data.p, degree + 1
    t = (data.u[None, :] - grid[:, None]) / h
    w = kern(t)
    powers = t[:, :, None] ** np.arange(d)
    # columns ordered (power, covariate)
    design = (powers[:, :, :, None] * data.x[None, :, None, :]).reshape(grid.size, data.n, d * p)
    wd = w[:, :, None] * design
    gram = np.einsum("gna,gnb->gab", wd, design)
    rhs = np.einsum("gna,n->ga", wd, data.y)
    npos = np.count_nonzero(w > 0, axis=1)
    for g in np.flatnonzero(npos == 0):
        raise EmptyWindow(float(grid[g]))
    bad = np.flatnonzero(~(spd_condition(gram) < 1e13))
    if bad.size:
        g = int(bad[0])
        raise RankDeficientWindow(float(grid[g]), int(npos[g]), d * p)
    coef = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
    return coef[:, :p]


def one_step(data: Dataset, u, spec: BaselineSpec) -> np.ndarray:
    """One-step estimate of ``a(u)``; shape ``(p,)`` for scalar ``u``."""
    out = one_step_grid(data, u, spec.kernel, spec.h, spec.degree)
    return out[0] if np.ndim(u) == 0 else out


def pilot_bandwidth(data: Dataset, h: float, min_points: int | None = None) -> float:
    """``h / 4`` widened to the smallest value giving every observation
    ``min_points`` (default ``2p``) neighbours, itself included, strictly
    inside its window."""
    m = 2 * data.p if min_points is None else int(min_points)
    m = min(m, data.n)
    u = np.sort(data.u)
    dist = np.abs(u[:, None] - u[None, :])
    kth = np.partition(dist, m - 1, axis=1)[:, m - 1]
    need = float(kth.max()) * (1 + 1e-9) + 1e-12
    return max(h / 4.0, need)


def two_step(data: Dataset, u, spec: BaselineSpec, target: int = -1, expand_window: bool = False):
    """Two-step estimate of ``a_target(u)``.

    A one-step pilot with the small bandwidth ``h0`` is evaluated at every
    observed ``U_i``; its estimates of the target coefficient are then
    smoothed by a local cubic fit with bandwidth ``h``.
    """
    t = check_target(target, data.p)
    h0 = spec.h0 if spec.h0 is not None else pilot_bandwidth(data, spec.h)
    pilot = one_step_grid(data, data.u, spec.kernel, h0, spec.degree)[:, t]
    return local_poly(data.u, pilot, SmootherSpec(spec.kernel, spec.h, 3), u, expand_window=expand_window)


def evaluate(data: Dataset, grid, spec: BaselineSpec, target: int = -1) -> np.ndarray:
    """Target-coefficient curve of either baseline on ``grid``."""
    t = check_target(target, data.p)
    if spec.kind == "one_step":
        return one_step_grid(data, grid, spec.kernel, spec.h, spec.degree)[:, t]
    return np.atleast_1d(two_step(data, np.atleast_1d(grid), spec, t))
