"""Robust standardisation, robust distances and covariate trimming."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .errors import SingularScatter, ZeroMadColumn

#: consistency constant applied to the median absolute deviation
MAD_SCALE = 1.4828
#: normal-consistency constant for the mean absolute deviation
_MEAN_AD_SCALE = np.sqrt(np.pi / 2.0)


def median_abs_deviation(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    med = np.median(X, axis=0)
    return np.median(np.abs(X - med), axis=0)


def standardize(X, columns=None):
    """Centre each column at its median and divide by 1.4828 * MAD.

    Returns ``(X_star, med, mad)``; ``mad`` is the raw median absolute
    deviation so ``X = X_star * 1.4828 * mad + med``.
    """
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    X2 = X[:, None] if squeeze else X
    med = np.median(X2, axis=0)
    mad = np.median(np.abs(X2 - med), axis=0)
    bad = np.flatnonzero(mad <= 0)
    if bad.size:
        col = bad[0] if columns is None else columns[bad[0]]
        raise ZeroMadColumn(col)
    Z = (X2 - med) / (MAD_SCALE * mad)
    return (Z[:, 0] if squeeze else Z), med, mad


def unstandardize(Z, med, mad):
    return np.asarray(Z, dtype=float) * (MAD_SCALE * np.asarray(mad)) + np.asarray(med)


def robust_location_scale(X, zero_mad: str = "fallback"):
    """Component-wise median and 1.4828 * MAD.

    A column with zero MAD (typical for sparse dummies) either raises
    :class:`SingularScatter` (``zero_mad="raise"``) or is scaled by the
    normal-consistent mean absolute deviation about the median instead;
    a constant column gets an infinite scale and so never contributes.
    """
    X = np.asarray(X, dtype=float)
    med = np.median(X, axis=0)
    dev = np.abs(X - med)
    scale = MAD_SCALE * np.median(dev, axis=0)
    zero = scale <= 0
    if np.any(zero):
        if zero_mad == "raise":
            raise SingularScatter(f"zero MAD in covariate(s) {np.flatnonzero(zero).tolist()}")
        if zero_mad != "fallback":
            raise ValueError(f"zero_mad must be 'raise' or 'fallback', got {zero_mad!r}")
        alt = _MEAN_AD_SCALE * dev[:, zero].mean(axis=0)
        scale[zero] = np.where(alt > 0, alt, np.inf)
    return med, scale


def robust_sq_distances(X, zero_mad: str = "fallback") -> np.ndarray:
    """Squared standardised Euclidean distance of each row from the median."""
    med, scale = robust_location_scale(X, zero_mad)
    Z = (np.asarray(X, dtype=float) - med) / scale
    return np.sum(Z * Z, axis=1)


def robust_norms(X, zero_mad: str = "fallback") -> np.ndarray:
    return np.sqrt(robust_sq_distances(X, zero_mad))


def trim_cutoff(n: int, p: int, quantile: float = 0.95, df="n-1") -> float:
    """Chi-square cut-off; ``df`` is ``"n-1"``, ``"p"`` or an integer."""
    if df == "n-1":
        k = n - 1
    elif df == "p":
        k = p
    else:
        k = int(df)
    if quantile >= 1.0:
        return np.inf
    return float(stats.chi2.ppf(quantile, k))


def robust_trim(X_star, quantile: float = 0.95, df="n-1") -> np.ndarray:
    """Indices of rows kept after dropping robust-distance outliers.

    Rows with squared distance at or above the chi-square cut-off are
    dropped. Location is the component-wise median and the scatter is
    diagonal from the MAD.
    """
    X_star = np.asarray(X_star, dtype=float)
    if X_star.ndim == 1:
        X_star = X_star[:, None]
    med = np.median(X_star, axis=0)
    mad = np.median(np.abs(X_star - med), axis=0)
    bad = np.flatnonzero(mad <= 0)
    if bad.size:
        raise ZeroMadColumn(int(bad[0]))
    Z = (X_star - med) / (MAD_SCALE * mad)
    d = np.sum(Z * Z, axis=1)
    cut = trim_cutoff(X_star.shape[0], X_star.shape[1], quantile, df)
    return np.flatnonzero(d < cut)
