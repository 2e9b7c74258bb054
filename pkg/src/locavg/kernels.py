"""Compactly supported smoothing kernels and their integral constants."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigError

# K(t) = sum_j c_j |t|**j on [-1, 1]; every offered kernel is a polynomial in |t|.
_POLY = {
    "epanechnikov": (0.75, 0.0, -0.75),
    "uniform": (0.5,),
    "triangular": (1.0, -1.0),
    "biweight": (15 / 16, 0.0, -30 / 16, 0.0, 15 / 16),
}

KERNEL_NAMES = tuple(_POLY)

_QUAD_TOL = 1e-12


@dataclass(frozen=True)
class Kernel:
    """Symmetric density on [-1, 1].

    Call the instance to evaluate it; evaluation is vectorised and returns
    zero outside the support.
    """

    family: str = "epanechnikov"

    def __post_init__(self):
        if self.family not in _POLY:
            raise ConfigError(
                f"unknown kernel {self.family!r}; choose from {', '.join(KERNEL_NAMES)}"
            )

    @property
    def coefficients(self) -> np.ndarray:
        return np.asarray(_POLY[self.family])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        val = np.polynomial.polynomial.polyval(a, self.coefficients)
        return np.where(a <= 1.0, val, 0.0)

    def squared(self, t):
        return self(t) ** 2

    def constants(self) -> "KernelConstants":
        return kernel_constants(self)


def get_kernel(kernel: "Kernel | str | None") -> Kernel:
    if kernel is None:
        return Kernel()
    if isinstance(kernel, Kernel):
        return kernel
    return Kernel(str(kernel).lower())


def kernel_eval(kernel: Kernel, t: float) -> float:
    return float(get_kernel(kernel)(t))


@dataclass(frozen=True)
class KernelConstants:
    """Moments and GLR normalising constants of a kernel.

    Attributes
    ----------
    xi : ndarray, shape (7,)
        ``xi[i] = int t**i K(t) dt`` for i = 0..6.
    nu : ndarray, shape (5,)
        ``nu[i] = int t**i K(t)**2 dt`` for i = 0..4.
    kappa1 : float
        ``K(0) - int K**2 / 2``.
    kappa2 : float
        ``int (K(t) - (K*K)(t) / 2)**2 dt``.
    """

    xi: np.ndarray
    nu: np.ndarray
    kappa1: float
    kappa2: float

    @property
    def r_glr(self) -> float:
        return self.kappa1 / self.kappa2

    def df_glr(self, h: float, support_length: float) -> float:
        return self.kappa1**2 / self.kappa2 * support_length / h

    @property
    def local_cubic_variance_factor(self) -> float:
        x2, x4 = self.xi[2], self.xi[4]
        v0, v2, v4 = self.nu[0], self.nu[2], self.nu[4]
        return (x4**2 * v0 - 2 * x4 * x2 * v2 + x2**2 * v4) / (x4 - x2**2) ** 2

    @property
    def local_cubic_bias_factor(self) -> float:
        x2, x4, x6 = self.xi[2], self.xi[4], self.xi[6]
        return (x4**2 - x2 * x6) / (x4 - x2**2) / 24.0


def _symmetric_moment(coef, i: int) -> float:
    # int_{-1}^{1} t^i sum_j c_j |t|^j dt, zero for odd i
    if i % 2:
        return 0.0
    return 2.0 * sum(c / (i + j + 1) for j, c in enumerate(coef))


def convolve(kernel: Kernel, t: float) -> float:
    """(K*K)(t) by adaptive quadrature over the overlap of the two supports."""
    lo, hi = max(-1.0, t - 1.0), min(1.0, t + 1.0)
    if hi <= lo:
        return 0.0
    brk = [s for s in (0.0, t) if lo < s < hi]
    val, _ = integrate.quad(
        lambda s: kernel(s) * kernel(t - s), lo, hi,
        points=brk or None, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200,
    )
    return float(val)


@functools.lru_cache(maxsize=None)
def _constants(family: str) -> KernelConstants:
    kernel = Kernel(family)
    coef = kernel.coefficients
    coef2 = np.convolve(coef, coef)
    xi = np.array([_symmetric_moment(coef, i) for i in range(7)])
    nu = np.array([_symmetric_moment(coef2, i) for i in range(5)])
    kappa1 = coef[0] - 0.5 * nu[0]

    def integrand(t):
        return (kernel(t) - 0.5 * convolve(kernel, t)) ** 2

    # the integrand is even
    kappa2, _ = integrate.quad(
        integrand, 0.0, 2.0, points=[1.0], epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200
    )
    xi.setflags(write=False)
    nu.setflags(write=False)
    return KernelConstants(xi=xi, nu=nu, kappa1=float(kappa1), kappa2=2.0 * kappa2)


def kernel_constants(kernel: "Kernel | str") -> KernelConstants:
    return _constants(get_kernel(kernel).family)
