"""Sandwich covariance of the minimum DPD estimator.

All per-row quantities are assembled in the (m-1)-dimensional space of
latent arguments and lifted to theta-space once, which keeps the cost at
O(n m^2 + n p^2) instead of O(n m d^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularPsi
from .model import (LOG_UNDERFLOW, Dataset, Frame, Theta, frame, lift_matrices,
                    lift_vectors)
from .objective import check_alpha

COND_LIMIT = 1e12


def _coefs(fr: Frame):
    """First and second order a-space coefficients with dead cells zeroed."""
    C = fr.coef_first()
    D = fr.coef_second()
    dead = fr.logp <= LOG_UNDERFLOW
    C[dead] = 0.0
    D[dead] = 0.0
    return C, D


def _pow(fr: Frame, power: float) -> np.ndarray:
    return np.exp(power * fr.logp)


def xi_rows(fr: Frame, alpha: float) -> np.ndarray:
    """a-space coefficients of xi_i(alpha) = sum_j u_j p_j^(1+alpha) (n x (m-1))."""
    C, _ = _coefs(fr)
    return np.einsum("nj,njk->nk", _pow(fr, 1.0 + alpha), C)


def xi_hat(theta_hat: Theta, link, x, alpha: float) -> np.ndarray:
    alpha = check_alpha(alpha)
    fr = frame(theta_hat, link, np.atleast_2d(x))
    return lift_vectors(xi_rows(fr, alpha), fr.X)[0]


def psi_rows(fr: Frame, y0: np.ndarray, alpha: float) -> np.ndarray:
    """Per-row a-space matrices of the plug-in Psi estimate (n x K x K).

    With grad(u_j) = hess(p_j)/p_j - u_j u_j', the bracketed terms reduce to
    sum_j p_j^(1+a) [D_j + a c_j c_j'] - p_Y^a [D_Y + (a-1) c_Y c_Y'].
    """
    C, D = _coefs(fr)
    n = fr.logp.shape[0]
    rows = np.arange(n)
    w = _pow(fr, 1.0 + alpha)
    M = np.einsum("nj,njk->nk", w, D)[:, :, None] * np.eye(D.shape[2])
    M += alpha * np.einsum("nj,njk,njl->nkl", w, C, C)
    cy = C[rows, y0]
    dy = D[rows, y0]
    wy = np.exp(alpha * fr.logp[rows, y0])
    wy[fr.logp[rows, y0] <= LOG_UNDERFLOW] = 0.0
    M -= wy[:, None, None] * (dy[:, :, None] * np.eye(D.shape[2])
                              + (alpha - 1.0) * cy[:, :, None] * cy[:, None, :])
    return M


def omega_rows(fr: Frame, alpha: float) -> np.ndarray:
    C, _ = _coefs(fr)
    w = _pow(fr, 2.0 * alpha + 1.0)
    xi = np.einsum("nj,njk->nk", _pow(fr, 1.0 + alpha), C)
    return np.einsum("nj,njk,njl->nkl", w, C, C) - xi[:, :, None] * xi[:, None, :]


def model_psi_rows(fr: Frame, alpha: float) -> np.ndarray:
    """J^(i)(alpha) when the true distributions are the model: sum_j p^(1+a) c c'."""
    C, _ = _coefs(fr)
    return np.einsum("nj,njk,njl->nkl", _pow(fr, 1.0 + alpha), C, C)


def psi_hat_n(theta_hat: Theta, link, data: Dataset, alpha: float) -> np.ndarray:
    alpha = check_alpha(alpha)
    fr = frame(theta_hat, link, data.X)
    P = lift_matrices(psi_rows(fr, data.y - 1, alpha), fr.X) / data.n
    return 0.5 * (P + P.T)


def omega_hat_n(theta_hat: Theta, link, data: Dataset, alpha: float) -> np.ndarray:
    alpha = check_alpha(alpha)
    fr = frame(theta_hat, link, data.X)
    O = lift_matrices(omega_rows(fr, alpha), fr.X) / data.n
    return 0.5 * (O + O.T)


def model_psi_n(theta: Theta, link, X, alpha: float) -> np.ndarray:
    """Psi_n(alpha) evaluated with model densities standing in for the truth."""
    alpha = check_alpha(alpha)
    fr = frame(theta, link, X)
    P = lift_matrices(model_psi_rows(fr, alpha), fr.X) / fr.X.shape[0]
    return 0.5 * (P + P.T)


def inverse_psi(psi: np.ndarray) -> np.ndarray:
    """Inverse through a symmetric eigendecomposition with a condition guard."""
    psi = 0.5 * (np.asarray(psi, dtype=float) + np.asarray(psi, dtype=float).T)
    if not np.all(np.isfinite(psi)):
        raise SingularPsi("Psi has non-finite entries")
    lam, Q = np.linalg.eigh(psi)
    mags = np.abs(lam)
    if mags.min() == 0.0 or mags.max() / mags.min() > COND_LIMIT:
        cond = np.inf if mags.min() == 0.0 else mags.max() / mags.min()
        raise SingularPsi(f"Psi condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    return (Q / lam) @ Q.T


def sandwich_matrix(psi: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Psi^-1 Omega Psi^-1 (asymptotic covariance of sqrt(n) theta_hat)."""
    Pi = inverse_psi(psi)
    S = Pi @ omega @ Pi
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class Sandwich:
    psi_hat: np.ndarray
    omega_hat: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    n: int

    @property
    def asymptotic_cov(self) -> np.ndarray:
        return self.cov * self.n

    @property
    def trace(self) -> float:
        """tr(Psi^-1 Omega Psi^-1)."""
        return float(np.trace(self.asymptotic_cov))

    @property
    def total_se(self) -> float:
        """Sum of asymptotic standard deviations divided by sqrt(n)."""
        return float(np.sum(self.se))


def sandwich(theta_hat: Theta, link, data: Dataset, alpha: float) -> Sandwich:
    psi = psi_hat_n(theta_hat, link, data, alpha)
    omega = omega_hat_n(theta_hat, link, data, alpha)
    S = sandwich_matrix(psi, omega)
    cov = S / data.n
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return Sandwich(psi, omega, cov, se, data.n)


def efficiency(cov_mle: np.ndarray, cov_alpha: np.ndarray) -> float:
    """Trace ratio tr(cov_mle) / tr(cov_alpha)."""
    t0 = float(np.trace(cov_mle))
    ta = float(np.trace(cov_alpha))
    if not (t0 > 0 and ta > 0):
        raise SingularPsi("covariance traces must be positive")
    return t0 / ta
