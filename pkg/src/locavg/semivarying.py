"""Constant coefficients of the semivarying model.

Two routes compute the same estimate: :func:`fit_joint` solves the bordered
normal equations through the Schur complement of the block-diagonal Gram
matrix, while :func:`fit_lape` projects out each group's column space with
orthogonal factors and regresses the projected response on the projected
constant-part design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import GroupedDesign
from .errors import ConfigError, SingularGroup, SingularSchur
from .local_average import MAX_CONDITION, _group_qr


@dataclass(frozen=True, eq=False)
class SemiVaryingFit:
    """Estimates for ``Y = X'a(U) + Z'b + e``.

    ``sigma_b`` is the estimated asymptotic covariance of ``sqrt(n)(b_hat - b)``,
    so ``b_hat +/- z * sqrt(diag(sigma_b) / n)`` is a pointwise interval.
    """

    b_hat: np.ndarray
    sigma_b: np.ndarray
    a_hat: np.ndarray | None
    method: str
    rss0: float
    sigma2_hat: float
    n: int
    u_bar: np.ndarray

    @property
    def std_err(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma_b) / self.n)

    def confint(self, alpha: float = 0.05) -> np.ndarray:
        from scipy import stats

        z = stats.norm.ppf(1 - alpha / 2)
        return np.column_stack([self.b_hat - z * self.std_err, self.b_hat + z * self.std_err])


class ProjectionOperator:
    """Implicit ``P = I_n - H_1 (+) ... (+) H_k`` from per-group orthonormal bases.

    Only the ``(k, I, p)`` orthonormal factors are stored.
    """

    def __init__(self, x: np.ndarray):
        k, I, p = x.shape
        if p == 0:
            self.q, self.r = np.zeros((k, I, 0)), np.zeros((k, 0, 0))
        else:
            self.q, self.r = _group_qr(x)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply P blockwise to ``v`` of shape (k, I) or (k, I, m)."""
        if v.ndim == 2:
            return v - np.einsum("kip,kp->ki", self.q, np.einsum("kip,ki->kp", self.q, v))
        coef = np.einsum("kip,kim->kpm", self.q, v)
        return v - np.einsum("kip,kpm->kim", self.q, coef)

    def hat_matrices(self) -> np.ndarray:
        """Dense per-group hat matrices ``H_i``, shape (k, I, I)."""
        return self.q @ np.swapaxes(self.q, 1, 2)


def _require_z(design: GroupedDesign):
    if design.z is None or design.q == 0:
        raise ConfigError("semivarying fit needs constant-part covariates z")


def _solve_schur(s: np.ndarray, rhs: np.ndarray, scale: float) -> np.ndarray:
    sv = np.linalg.svd(s, compute_uv=False)
    if sv[0] <= 1e-12 * max(scale, 1e-300):
        raise SingularSchur(float("inf"))
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if not cond < MAX_CONDITION:
        raise SingularSchur(float(cond))
    return np.linalg.solve(s, rhs)


def _covariance(schur: np.ndarray, sigma2: float, n: int) -> np.ndarray:
    sigma_hat = schur / n
    cov = sigma2 * np.linalg.inv(sigma_hat)
    return 0.5 * (cov + cov.T)


def _sigma2(rss0: float, design: GroupedDesign) -> float:
    dof = design.n - design.k * design.p - design.q
    return rss0 / dof if dof > 0 else float("nan")


def fit_joint(design: GroupedDesign) -> SemiVaryingFit:
    """Least squares on ``(X_block, Z)`` via the bordered normal equations.

    The block-diagonal part is inverted group by group through Cholesky
    factors of ``X_i'X_i``; only the ``q x q`` Schur complement
    ``sum_i Z_i'Z_i - Z_i'X_i (X_i'X_i)^{-1} X_i'Z_i`` is solved globally.
    The varying part is recovered by back substitution.
    """
    _require_z(design)
    x, z, y = design.x, design.z, design.y
    k, I, p = x.shape
    zz = np.einsum("kia,kib->ab", z, z)
    zy = np.einsum("kia,ki->a", z, y)
    if p:
        gram = np.einsum("kia,kib->kab", x, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            ev = np.linalg.eigvalsh(gram)
            cond = ev[:, -1] / ev[:, 0]
        bad = np.flatnonzero(~((ev[:, 0] > 0) & (cond < MAX_CONDITION)))
        if bad.size:
            raise SingularGroup(int(bad[0]), float(cond[bad[0]]) if ev[bad[0], 0] > 0 else np.inf)
        chol = np.linalg.cholesky(gram)
        xz = np.einsum("kia,kib->kab", x, z)
        xy = np.einsum("kia,ki->ka", x, y)
        # L^{-1} X'Z and L^{-1} X'y
        lxz = np.linalg.solve(chol, xz)
        lxy = np.linalg.solve(chol, xy[:, :, None])[:, :, 0]
        schur = zz - np.einsum("kab,kac->bc", lxz, lxz)
        rhs = zy - np.einsum("kab,ka->b", lxz, lxy)
    else:
        schur, rhs = zz, zy
    b_hat = _solve_schur(schur, rhs, np.trace(zz))
    resid_y = y - np.einsum("kiq,q->ki", z, b_hat)
    if p:
        xr = np.einsum("kia,ki->ka", x, resid_y)
        a_hat = np.linalg.solve(gram, xr[:, :, None])[:, :, 0]
        resid = resid_y - np.einsum("kip,kp->ki", x, a_hat)
    else:
        a_hat = np.zeros((k, 0))
        resid = resid_y
    rss0 = float(np.sum(resid**2))
    s2 = _sigma2(rss0, design)
    return SemiVaryingFit(
        b_hat=b_hat, sigma_b=_covariance(schur, s2, design.n), a_hat=a_hat,
        method="joint", rss0=rss0, sigma2_hat=s2, n=design.n, u_bar=design.u_bar,
    )


def fit_lape(design: GroupedDesign, back_substitute: bool = True) -> SemiVaryingFit:
    """Local average projection estimator ``(Z'PZ)^{-1} Z'PY``.

    Computed as the least-squares regression of ``PY`` on ``PZ`` with ``P``
    applied blockwise from orthonormal group factors, so no ``n x n`` matrix
    is formed.
    """
    _require_z(design)
    x, z, y = design.x, design.z, design.y
    k, I, p = x.shape
    proj = ProjectionOperator(x)
    pz = proj.apply(z)
    py = proj.apply(y)
    n, q = design.n, design.q
    pz2 = pz.reshape(n, q)
    py2 = py.reshape(n)
    sv = np.linalg.svd(pz2, compute_uv=False)
    zscale = np.linalg.norm(z)
    if sv[0] <= 1e-8 * max(zscale, 1e-300):
        raise SingularSchur(float("inf"))
    cond = (sv[0] / sv[-1]) ** 2 if sv[-1] > 0 else np.inf
    if not cond < MAX_CONDITION:
        raise SingularSchur(float(cond))
    b_hat, *_ = np.linalg.lstsq(pz2, py2, rcond=None)
    resid = py2 - pz2 @ b_hat
    rss0 = float(resid @ resid)
    a_hat = None
    if back_substitute:
        ry = y - np.einsum("kiq,q->ki", z, b_hat)
        if p:
            qty = np.einsum("kip,ki->kp", proj.q, ry)
            a_hat = np.linalg.solve(proj.r, qty[:, :, None])[:, :, 0]
        else:
            a_hat = np.zeros((k, 0))
    schur = pz2.T @ pz2
    s2 = _sigma2(rss0, design)
    return SemiVaryingFit(
        b_hat=b_hat, sigma_b=_covariance(schur, s2, n), a_hat=a_hat,
        method="projection", rss0=rss0, sigma2_hat=s2, n=n, u_bar=design.u_bar,
    )


def covariance_b(design: GroupedDesign, fit: SemiVaryingFit) -> np.ndarray:
    """``sigma2_hat * Sigma_hat^{-1}`` with ``Sigma_hat = (1/n) sum_i Z_i'(I - H_i)Z_i``."""
    _require_z(design)
    proj = ProjectionOperator(design.x)
    pz = proj.apply(design.z).reshape(design.n, design.q)
    schur = pz.T @ pz
    sv = np.linalg.svd(schur, compute_uv=False)
    if sv[0] <= 0 or not sv[0] / max(sv[-1], 1e-300) < MAX_CONDITION:
        raise SingularSchur(float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf"))
    return _covariance(schur, fit.sigma2_hat, design.n)
