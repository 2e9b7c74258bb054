"""Per-group least squares: the local average estimator of a(u)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import GroupedDesign, check_target
from .errors import GroupTooSmall, SingularGroup
from .kernels import Kernel, get_kernel

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class LocalAverageFit:
    """Result of fitting every group independently.

    Attributes
    ----------
    a_hat : ndarray, shape (k, p)
        Row ``i`` is the coefficient vector estimated in group ``i``.
    gram_inv : ndarray, shape (k, p, p)
        Per-group ``(X_i' X_i)^{-1}`` (ridge-augmented when ``ridge > 0``).
    u_bar : ndarray, shape (k,)
        Group means of the index variable.
    residuals : ndarray, shape (k, I)
    rss1 : float
        Total residual sum of squares.
    """

    a_hat: np.ndarray
    gram_inv: np.ndarray
    u_bar: np.ndarray
    residuals: np.ndarray
    rss1: float
    group_size: int
    ridge: float = 0.0

    @property
    def k(self) -> int:
        return self.a_hat.shape[0]

    @property
    def p(self) -> int:
        return self.a_hat.shape[1]

    @property
    def n(self) -> int:
        return self.k * self.group_size

    @property
    def dof(self) -> int:
        return self.k * (self.group_size - self.p)

    @property
    def sigma2_hat(self) -> float:
        """Residual variance ``rss1 / (k (I - p))``; needs ``I > p``."""
        if self.group_size <= self.p:
            raise GroupTooSmall(self.group_size, self.p + 1, "residual variance needs I > p")
        return self.rss1 / self.dof


@dataclass(frozen=True, eq=False)
class PointwiseModel:
    """The ``k`` pseudo-observations ``(u_bar_i, a_hat_l(u_bar_i))`` of one coefficient."""

    u: np.ndarray
    value: np.ndarray
    group_size: int
    target: int

    @property
    def k(self) -> int:
        return self.u.shape[0]

    def __iter__(self):
        return iter(zip(self.u.tolist(), self.value.tolist()))


def _group_qr(x: np.ndarray, ridge: float = 0.0):
    k, I, p = x.shape
    if ridge > 0:
        pad = np.broadcast_to(np.sqrt(ridge) * np.eye(p), (k, p, p))
        x = np.concatenate([x, pad], axis=1)
    q, r = np.linalg.qr(x, mode="reduced")
    with np.errstate(divide="ignore", invalid="ignore"):
        sv = np.linalg.svd(r, compute_uv=False)
        cond_gram = (sv[:, 0] / sv[:, -1]) ** 2
    cond_gram = np.where(np.isfinite(cond_gram), cond_gram, np.inf)
    bad = np.flatnonzero(~(cond_gram < MAX_CONDITION))
    if bad.size:
        i = int(bad[0])
        raise SingularGroup(i, float(cond_gram[i]))
    return q, r


def fit_groups(design: GroupedDesign, ridge: float = 0.0) -> LocalAverageFit:
    """Solve the ``k`` independent ``I x p`` least-squares problems.

    Each group is factorised once by QR; both the coefficients and the
    inverse Gram matrix come from the triangular factor. With ``ridge > 0``
    the Gram matrix is replaced by ``X'X + ridge * Id``.

    Raises
    ------
    SingularGroup
        If a group's Gram matrix has condition number above 1e12.
    """
    x, y = design.x, design.y
    k, I, p = x.shape
    q, r = _group_qr(x, ridge)
    qty = np.einsum("kip,ki->kp", q[:, :I, :], y)
    r_inv = np.linalg.inv(r)
    a_hat = np.einsum("kab,kb->ka", r_inv, qty)
    gram_inv = r_inv @ np.swapaxes(r_inv, 1, 2)
    gram_inv = 0.5 * (gram_inv + np.swapaxes(gram_inv, 1, 2))
    resid = y - np.einsum("kip,kp->ki", x, a_hat)
    return LocalAverageFit(
        a_hat=a_hat,
        gram_inv=gram_inv,
        u_bar=design.u_bar,
        residuals=resid,
        rss1=float(np.sum(resid**2)),
        group_size=I,
        ridge=float(ridge),
    )


def to_pointwise_model(fit: LocalAverageFit, target: int = -1) -> PointwiseModel:
    """Pseudo-observations for coefficient ``target`` in ascending ``u_bar`` order."""
    t = check_target(target, fit.p)
    return PointwiseModel(
        u=fit.u_bar.copy(), value=fit.a_hat[:, t].copy(), group_size=fit.group_size, target=t
    )


def gamma_diagonal(fit: LocalAverageFit, target: int = -1) -> np.ndarray:
    """Realised ``e_l' (X_i' X_i)^{-1} e_l`` for every group."""
    t = check_target(target, fit.p)
    return fit.gram_inv[:, t, t].copy()


def gamma_hat(fit: LocalAverageFit, target: int, kernel: Kernel | str | None, h: float):
    """Kernel-smoothed estimate of ``u -> e_l' Gamma(u, I) e_l``.

    Returns a vectorised callable. It raises ``EmptyWindow`` at points with
    no group mean inside the kernel window.
    """
    from .smoothing import nadaraya_watson

    kern = get_kernel(kernel)
    diag = gamma_diagonal(fit, target)
    u_bar = fit.u_bar
    if u_bar.size == 1:
        const = float(diag[0])
        return lambda u: np.full(np.shape(u), const) if np.ndim(u) else const

    def gamma(u):
        return nadaraya_watson(u_bar, diag, kern, h, u)

    return gamma
