"""Error distributions of the latent-variable model.

Each link bundles the CDF ``F``, its survival function, the density ``f``
and the density derivative ``f'``, together with log-scale versions used by
the model code to keep tail probabilities accurate. All evaluators are
vectorised over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

LINK_NAMES = ("logit", "probit", "cauchit", "cloglog")

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG_PI = np.log(np.pi)


def _log1mexp(d):
    # log(1 - exp(d)) for d <= 0, accurate on both sides of -log 2
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    near = d > -np.log(2.0)
    with np.errstate(divide="ignore"):
        out[near] = np.log(-np.expm1(d[near]))
        out[~near] = np.log1p(-np.exp(d[~near]))
    return out


# -- logistic -------------------------------------------------------------

def _logit_cdf(x):
    return special.expit(x)


def _logit_sf(x):
    return special.expit(-x)


def _logit_logcdf(x):
    return -np.logaddexp(0.0, -x)


def _logit_logsf(x):
    return -np.logaddexp(0.0, x)


def _logit_logpdf(x):
    ax = np.abs(x)
    return -ax - 2.0 * np.log1p(np.exp(-ax))


def _logit_dlogpdf(x):
    return -np.tanh(0.5 * x)


def _logit_ppf(q):
    return special.logit(q)


# -- standard normal ------------------------------------------------------

def _probit_cdf(x):
    return special.ndtr(x)


def _probit_sf(x):
    return special.ndtr(-x)


def _probit_logcdf(x):
    return special.log_ndtr(x)


def _probit_logsf(x):
    return special.log_ndtr(-x)


def _probit_logpdf(x):
    return -0.5 * x * x - _LOG_SQRT_2PI


def _probit_dlogpdf(x):
    return -x


def _probit_ppf(q):
    return special.ndtri(q)


# -- Cauchy ---------------------------------------------------------------

def _cauchit_cdf(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    neg = x < 0
    # arctan(-1/x)/pi keeps full relative accuracy in the left tail
    out[neg] = np.arctan(-1.0 / x[neg]) / np.pi
    out[~neg] = 0.5 + np.arctan(x[~neg]) / np.pi
    return out


def _cauchit_sf(x):
    return _cauchit_cdf(-np.asarray(x, dtype=float))


def _cauchit_logcdf(x):
    return np.log(_cauchit_cdf(x))


def _cauchit_logsf(x):
    return np.log(_cauchit_sf(x))


def _cauchit_logpdf(x):
    return -_LOG_PI - np.log1p(x * x)


def _cauchit_dlogpdf(x):
    return -2.0 * x / (1.0 + x * x)


def _cauchit_ppf(q):
    return np.tan(np.pi * (np.asarray(q, dtype=float) - 0.5))


# -- complementary log-log: F(x) = 1 - exp(-exp(x)) -----------------------

def _cloglog_cdf(x):
    with np.errstate(over="ignore"):
        return -np.expm1(-np.exp(x))


def _cloglog_sf(x):
    with np.errstate(over="ignore"):
        return np.exp(-np.exp(x))


def _cloglog_logcdf(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    low = x < -30.0
    u = np.exp(x[low])
    out[low] = x[low] - 0.5 * u
    with np.errstate(over="ignore"):
        out[~low] = _log1mexp(-np.exp(x[~low]))
    return out


def _cloglog_logsf(x):
    with np.errstate(over="ignore"):
        return -np.exp(x)


def _cloglog_logpdf(x):
    with np.errstate(over="ignore"):
        return x - np.exp(x)


def _cloglog_dlogpdf(x):
    with np.errstate(over="ignore"):
        return 1.0 - np.exp(x)


def _cloglog_ppf(q):
    return np.log(-np.log1p(-np.asarray(q, dtype=float)))


_TABLE = {
    "logit": (_logit_cdf, _logit_sf, _logit_logcdf, _logit_logsf,
              _logit_logpdf, _logit_dlogpdf, _logit_ppf),
    "probit": (_probit_cdf, _probit_sf, _probit_logcdf, _probit_logsf,
               _probit_logpdf, _probit_dlogpdf, _probit_ppf),
    "cauchit": (_cauchit_cdf, _cauchit_sf, _cauchit_logcdf, _cauchit_logsf,
                _cauchit_logpdf, _cauchit_dlogpdf, _cauchit_ppf),
    "cloglog": (_cloglog_cdf, _cloglog_sf, _cloglog_logcdf, _cloglog_logsf,
                _cloglog_logpdf, _cloglog_dlogpdf, _cloglog_ppf),
}


def _as_float(x):
    arr = np.asarray(x, dtype=float)
    return arr


def _unwrap(x, out):
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class Link:
    """One of the four standard error distributions, selected by name."""

    kind: str

    def __post_init__(self):
        if self.kind not in _TABLE:
            raise ValueError(
                f"unknown link {self.kind!r}; expected one of {LINK_NAMES}")

    @property
    def symmetric(self) -> bool:
        return self.kind != "cloglog"

    def _f(self, idx, x):
        arr = np.atleast_1d(_as_float(x))
        return _unwrap(x, _TABLE[self.kind][idx](arr).reshape(np.shape(x)))

    def cdf(self, x):
        return self._f(0, x)

    def sf(self, x):
        return self._f(1, x)

    def logcdf(self, x):
        return self._f(2, x)

    def logsf(self, x):
        return self._f(3, x)

    def logpdf(self, x):
        return self._f(4, x)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def dlogpdf(self, x):
        """d/dx log f(x); f'(x) = f(x) * dlogpdf(x)."""
        return self._f(5, x)

    def pdf_deriv(self, x):
        f = np.atleast_1d(self.pdf(x))
        s = np.atleast_1d(self.dlogpdf(x))
        with np.errstate(invalid="ignore"):
            out = f * s
        # 0 * inf = 0 convention in the far tails
        out = np.where(f == 0.0, 0.0, out)
        return _unwrap(x, out.reshape(np.shape(x)))

    def ppf(self, q):
        return self._f(6, q)

    def __str__(self):
        return self.kind


def get_link(link) -> Link:
    """Accept a ``Link`` or one of the names in ``LINK_NAMES``."""
    if isinstance(link, Link):
        return link
    return Link(str(link))


def cdf(link, x):
    return get_link(link).cdf(x)


def pdf(link, x):
    return get_link(link).pdf(x)


def pdf_deriv(link, x):
    return get_link(link).pdf_deriv(x)
