"""Density power divergence loss for the ordinal model.

For alpha > 0 the per-observation loss is

    V_i = sum_j p_ij^(1+alpha) - (1 + 1/alpha) p_{i,Y_i}^alpha

and for alpha = 0 it is the negative log-likelihood -log p_{i,Y_i}. The
term that does not depend on theta is dropped. H_n is the mean of V_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProbability
from .links import Link, get_link
from .model import LOG_UNDERFLOW, Dataset, Frame, Theta, frame, lift_vectors


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def row_losses(fr: Frame, y0: np.ndarray, alpha: float) -> np.ndarray:
    """V_i for every row; ``y0`` holds 0-based observed categories."""
    lpy = fr.logp[np.arange(y0.size), y0]
    if alpha == 0.0:
        return -lpy
    return (np.exp((1.0 + alpha) * fr.logp).sum(axis=1)
            - (1.0 + 1.0 / alpha) * np.exp(alpha * lpy))


def row_arg_gradients(fr: Frame, y0: np.ndarray, alpha: float) -> np.ndarray:
    """dV_i/da_k for every row (n x (m-1)).

    Uses dV/da_k = f(a_k) (D_k - D_{k+1}) with
    D_j = (1+alpha) (p_j^alpha - 1{j=Y} p_Y^(alpha-1)); every product is
    formed on the log scale so tail cells neither overflow nor turn into 0/0.
    """
    n, m = fr.logp.shape
    K = m - 1
    rows = np.arange(n)
    lpy = fr.logp[rows, y0]
    with np.errstate(over="ignore"):
        G = np.exp(fr.logf + alpha * fr.logp[:, :K]) - np.exp(fr.logf + alpha * fr.logp[:, 1:])
        obs = np.exp(fr.logf + (alpha - 1.0) * lpy[:, None])
    # the observed-category term enters column Y (as p_Y) and column Y-1 (as p_{Y})
    hit_up = y0 < K
    G[rows[hit_up], y0[hit_up]] -= obs[rows[hit_up], y0[hit_up]]
    hit_lo = y0 > 0
    G[rows[hit_lo], y0[hit_lo] - 1] += obs[rows[hit_lo], y0[hit_lo] - 1]
    return (1.0 + alpha) * G


def value_and_gradient(theta: Theta, link, X, y0, alpha: float, weights=None):
    """Weighted mean loss and its theta-gradient, without underflow checks.

    This is the form the optimizer uses: underflowed probabilities give an
    infinite value rather than an exception so a line search can back off.
    """
    fr = frame(theta, link, X)
    V = row_losses(fr, y0, alpha)
    G = row_arg_gradients(fr, y0, alpha)
    n = y0.size
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float) / n
    value = float(w @ V)
    gamma_grad = w @ G
    beta_grad = -(fr.X.T @ (w * G.sum(axis=1)))
    return value, np.concatenate([gamma_grad, beta_grad])


@dataclass(frozen=True)
class DpdObjective:
    """H_n for a fixed tuning parameter, link and dataset."""

    alpha: float
    link: Link
    data: Dataset

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_alpha(self.alpha))
        object.__setattr__(self, "link", get_link(self.link))

    def _frame(self, theta):
        return frame(theta, self.link, self.data.X)

    def _check_observed(self, fr, rows=None):
        y0 = self.data.y - 1
        if rows is None:
            rows = np.arange(self.data.n)
        lp = fr.logp[np.arange(len(rows)), y0[rows]]
        if np.any(lp <= LOG_UNDERFLOW):
            raise DegenerateProbability("observed-category probability underflows")

    def v_i(self, theta: Theta, i: int) -> float:
        """Loss of observation ``i`` (1-based)."""
        if not 1 <= i <= self.data.n:
            raise IndexError(f"observation {i} outside 1..{self.data.n}")
        row = np.array([i - 1])
        fr = frame(theta, self.link, self.data.X[row])
        if self.alpha == 0.0:
            self._check_observed(fr, row)
        return float(row_losses(fr, self.data.y[row] - 1, self.alpha)[0])

    def h_n(self, theta: Theta) -> float:
        fr = self._frame(theta)
        if self.alpha == 0.0:
            self._check_observed(fr)
        # sequential index-order reduction keeps results reproducible
        return float(np.add.reduce(row_losses(fr, self.data.y - 1, self.alpha)) / self.data.n)

    def h_n_gradient(self, theta: Theta) -> np.ndarray:
        fr = self._frame(theta)
        if self.alpha < 1.0:
            self._check_observed(fr)
        G = row_arg_gradients(fr, self.data.y - 1, self.alpha)
        return lift_vectors(G, fr.X).sum(axis=0) / self.data.n


def v_i(obj: DpdObjective, theta: Theta, i: int) -> float:
    return obj.v_i(theta, i)


def h_n(obj: DpdObjective, theta: Theta) -> float:
    return obj.h_n(theta)


def h_n_gradient(obj: DpdObjective, theta: Theta) -> np.ndarray:
    return obj.h_n_gradient(theta)


def population_estimating_function(theta: Theta, link, X, alpha: float, g=None) -> np.ndarray:
    """Mean over rows of sum_j p_j^(1+a) u_j - sum_j g_j p_j^a u_j.

    ``g`` (n x m) defaults to the model probabilities themselves, in which
    case the result vanishes identically (Fisher consistency).
    """
    alpha = check_alpha(alpha)
    fr = frame(theta, link, X)
    p = fr.p
    if g is None:
        g = p
    C = fr.coef_first()
    w = np.exp((1.0 + alpha) * fr.logp) - g * np.exp(alpha * fr.logp)
    c = np.einsum("nj,njk->nk", w, C)
    return lift_vectors(c, fr.X).mean(axis=0)
