"""Fitting: minimum DPD, maximum likelihood and two robust competitors.

All fits minimise a (weighted) mean loss over the unconstrained vector
``a`` with ``gamma_1 = a_1`` and ``gamma_j = gamma_{j-1} + exp(a_j)``, so the
cut-offs stay ordered without constraints. Convergence is always judged on
the gradient with respect to the original ``(gamma, beta)``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (ConvergenceWarning, EmptyCategoryWarning, InvalidTheta,
                     NoConvergence, SingularPsi)
from .links import get_link
from .model import Dataset, Theta, frame
from .objective import check_alpha, value_and_gradient
from .optim import bfgs
from .preprocess import robust_norms, robust_sq_distances

log = logging.getLogger(__name__)

ESTIMATORS = ("mdpde", "mle", "croux_wml", "iannario")
WEIGHT_KINDS = ("w1", "w2", "w3")


@dataclass(frozen=True)
class FitConfig:
    """Estimator choice and optimizer settings.

    ``c`` and ``weight_kind`` apply to the Iannario estimator; ``None`` picks
    the link-dependent default. ``zero_mad`` controls how the robust
    covariate distances treat a zero-MAD column (``"raise"`` or
    ``"fallback"``, see :func:`preprocess.robust_location_scale`).
    """

    estimator: str = "mdpde"
    alpha: float = 0.0
    c: float | None = None
    weight_kind: str | None = None
    max_iter: int = 500
    grad_tol: float = 1e-8
    init: Theta | None = None
    zero_mad: str = "raise"
    covariance: bool = True
    raise_on_failure: bool = True

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        check_alpha(self.alpha)
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be positive")
        if self.weight_kind is not None and self.weight_kind not in WEIGHT_KINDS:
            raise ValueError(f"weight_kind must be one of {WEIGHT_KINDS}")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")

    @property
    def label(self) -> str:
        if self.estimator == "mdpde":
            return f"mdpde({self.alpha:g})"
        if self.estimator == "iannario":
            return f"iannario({self.weight_kind or 'default'},{self.c if self.c else 'default'})"
        return self.estimator


@dataclass
class FitResult:
    theta_hat: Theta
    objective_value: float
    grad_norm: float
    iterations: int
    converged: bool
    covariance: np.ndarray | None = None
    alpha: float | None = None
    estimator: str = "mdpde"
    message: str = ""
    trace: list = field(default_factory=list, repr=False)

    @property
    def se(self) -> np.ndarray | None:
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def to_dict(self) -> dict:
        return {
            "gamma": self.theta_hat.gamma.tolist(),
            "beta": self.theta_hat.beta.tolist(),
            "alpha": self.alpha,
            "converged": bool(self.converged),
            "grad_norm": float(self.grad_norm),
            "covariance": None if self.covariance is None else self.covariance.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# reparameterisation
# ---------------------------------------------------------------------------

def gamma_to_free(gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    return np.concatenate([gamma[:1], np.log(np.diff(gamma))])


def free_to_gamma(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.cumsum(np.concatenate([a[:1], np.exp(a[1:])]))


def free_gradient(a, grad_gamma) -> np.ndarray:
    """Chain rule from d/dgamma to d/da."""
    tail = np.cumsum(np.asarray(grad_gamma)[::-1])[::-1]
    out = tail.copy()
    out[1:] *= np.exp(np.asarray(a)[1:])
    return out


def _to_free(theta: Theta) -> np.ndarray:
    return np.concatenate([gamma_to_free(theta.gamma), theta.beta])


def _from_free(v, K: int) -> Theta:
    return Theta(free_to_gamma(v[:K]), v[K:])


# ---------------------------------------------------------------------------
# initial values
# ---------------------------------------------------------------------------

def default_init(data: Dataset, link) -> Theta:
    """Zero slopes and cut-offs at quantiles of the cumulative frequencies."""
    link = get_link(link)
    n = data.n
    cum = np.cumsum(data.counts())[:-1] / n
    cum = np.clip(cum, 1.0 / (2 * n), 1.0 - 1.0 / (2 * n))
    gamma = np.asarray(link.ppf(cum), dtype=float)
    if np.any(np.diff(gamma) <= 0):
        gamma = gamma + np.arange(1, gamma.size + 1) * 1e-4
        gamma = np.maximum.accumulate(gamma)
    return Theta(gamma, np.zeros(data.p))


def _check_categories(data: Dataset):
    empty = np.flatnonzero(data.counts() == 0) + 1
    if empty.size:
        warnings.warn(f"categories {empty.tolist()} are unobserved; boundary cut-offs may diverge",
                      EmptyCategoryWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# core weighted minimiser
# ---------------------------------------------------------------------------

def _minimise(data: Dataset, link, alpha: float, weights, start: Theta, cfg: FitConfig):
    K = data.m - 1
    y0 = data.y - 1
    grads = {}

    def fg(v):
        try:
            theta = _from_free(v, K)
        except InvalidTheta:
            return np.inf, np.full(v.size, np.nan)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            val, g = value_and_gradient(theta, link, data.X, y0, alpha, weights)
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            return np.inf, np.full(v.size, np.nan)
        grads[v.tobytes()] = g
        return val, np.concatenate([free_gradient(v[:K], g[:K]), g[K:]])

    def theta_grad(v):
        g = grads.get(v.tobytes())
        if g is None:
            fg(v)
            g = grads.get(v.tobytes(), np.full(v.size, np.inf))
        return g

    def done(v, _g):
        return np.max(np.abs(theta_grad(v))) <= cfg.grad_tol

    res = bfgs(fg, _to_free(start), done, max_iter=int(cfg.max_iter))
    theta = _from_free(res.x, K)
    gnorm = float(np.max(np.abs(theta_grad(res.x))))
    converged = gnorm <= cfg.grad_tol
    return theta, res, gnorm, converged


def _finish(data, link, alpha, cfg, theta, res, gnorm, converged, estimator, iterations=None):
    cov = None
    if cfg.covariance and converged and estimator in ("mdpde", "mle"):
        from .inference import sandwich
        try:
            cov = sandwich(theta, link, data, alpha).cov
        except (SingularPsi, ArithmeticError) as exc:
            log.info("covariance unavailable: %s", exc)
    out = FitResult(theta, float(res.value), gnorm,
                    res.iterations if iterations is None else iterations,
                    bool(converged), cov,
                    alpha if estimator in ("mdpde", "mle") else None,
                    estimator, res.message, list(res.trace))
    if not converged:
        msg = (f"{estimator} fit did not converge after {out.iterations} iterations "
               f"(gradient inf-norm {gnorm:.3g}, {res.message})")
        if cfg.raise_on_failure:
            raise NoConvergence(msg, out)
        warnings.warn(msg, ConvergenceWarning, stacklevel=3)
    return out


def _config(cfg, **over) -> FitConfig:
    cfg = FitConfig() if cfg is None else cfg
    return replace(cfg, **over) if over else cfg


def _start(data, link, cfg):
    init = cfg.init if cfg.init is not None else default_init(data, link)
    if init.m != data.m or init.p != data.p:
        raise InvalidTheta(f"initial theta has m={init.m}, p={init.p}; data has m={data.m}, p={data.p}")
    return init


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def fit_mdpde(data: Dataset, link, alpha: float, cfg: FitConfig | None = None) -> FitResult:
    """Minimum DPD estimate for tuning parameter ``alpha``."""
    alpha = check_alpha(alpha)
    link = get_link(link)
    cfg = _config(cfg, estimator="mdpde" if alpha > 0 else "mle", alpha=alpha)
    _check_categories(data)
    theta, res, gnorm, conv = _minimise(data, link, alpha, None, _start(data, link, cfg), cfg)
    return _finish(data, link, alpha, cfg, theta, res, gnorm, conv,
                   "mdpde" if alpha > 0 else "mle")


def fit_mle(data: Dataset, link, cfg: FitConfig | None = None) -> FitResult:
    return fit_mdpde(data, link, 0.0, cfg)


def croux_weights(X, zero_mad: str = "raise") -> np.ndarray:
    """w_i = (p + 3) / (d_i + 3) with d_i the robust squared distance."""
    X = np.asarray(X, dtype=float)
    d = robust_sq_distances(X, zero_mad)
    return (X.shape[1] + 3.0) / (d + 3.0)


def fit_croux_wml(data: Dataset, link, cfg: FitConfig | None = None) -> FitResult:
    """Weighted likelihood with covariate-distance weights fixed up front."""
    link = get_link(link)
    cfg = _config(cfg, estimator="croux_wml")
    _check_categories(data)
    w = croux_weights(data.X, cfg.zero_mad)
    theta, res, gnorm, conv = _minimise(data, link, 0.0, w, _start(data, link, cfg), cfg)
    return _finish(data, link, 0.0, cfg, theta, res, gnorm, conv, "croux_wml")


def iannario_defaults(link) -> tuple[str, float]:
    return ("w3", 0.8) if get_link(link).kind == "logit" else ("w2", 1.5)


def generalized_residuals(theta: Theta, link, data: Dataset) -> np.ndarray:
    """e_i = A_{Y_i}(x_i'beta): density difference over probability."""
    fr = frame(theta, link, data.X)
    C = fr.coef_first()
    with np.errstate(invalid="ignore"):
        e = C[np.arange(data.n), data.y - 1].sum(axis=1)
    return np.nan_to_num(e, nan=0.0, posinf=np.finfo(float).max, neginf=-np.finfo(float).max)


def iannario_weights(theta: Theta, link, data: Dataset, c: float, weight_kind: str,
                     norms=None, zero_mad: str = "raise") -> np.ndarray:
    if norms is None:
        norms = robust_norms(data.X, zero_mad)
    with np.errstate(divide="ignore", invalid="ignore"):
        if weight_kind == "w3":
            r = norms
        else:
            e = np.abs(generalized_residuals(theta, link, data))
            r = e if weight_kind == "w1" else e * norms
        w = np.where(r > c, c / r, 1.0)
    return w


def fit_iannario(data: Dataset, link, c: float | None = None, weight_kind: str | None = None,
                 cfg: FitConfig | None = None) -> FitResult:
    """Weighted-score M-estimate by iteratively reweighted likelihood.

    Each outer step freezes the weights at the current iterate and maximises
    the weighted log-likelihood; the loop stops when successive iterates
    agree to ``grad_tol`` in the infinity norm.
    """
    link = get_link(link)
    cfg = _config(cfg, estimator="iannario")
    kind_default, c_default = iannario_defaults(link)
    c = float(c if c is not None else (cfg.c if cfg.c is not None else c_default))
    kind = weight_kind or cfg.weight_kind or kind_default
    if not c > 0:
        raise ValueError("c must be positive")
    if kind not in WEIGHT_KINDS:
        raise ValueError(f"weight_kind must be one of {WEIGHT_KINDS}")
    cfg = replace(cfg, c=c, weight_kind=kind)
    _check_categories(data)
    norms = robust_norms(data.X, cfg.zero_mad) if kind != "w1" else None
    inner = replace(cfg, raise_on_failure=False)
    theta = _start(data, link, cfg)
    total = 0
    trace = []
    conv = False
    res = None
    gnorm = np.inf
    for outer in range(int(cfg.max_iter)):
        w = iannario_weights(theta, link, data, c, kind, norms)
        if outer == 0 and np.all(w == 1.0):
            log.info("all Iannario weights equal 1; the fit coincides with the MLE")
        new, res, gnorm, ok = _minimise(data, link, 0.0, w, theta, inner)
        total += res.iterations
        trace.extend(res.trace)
        step = np.max(np.abs(new.vector() - theta.vector()))
        theta = new
        if ok and step < cfg.grad_tol:
            conv = True
            break
    res.trace = trace
    res.message = "weights stabilised" if conv else "outer iteration limit"
    return _finish(data, link, 0.0, cfg, theta, res, gnorm, conv, "iannario", iterations=total)


def fit(data: Dataset, link, cfg: FitConfig) -> FitResult:
    """Dispatch on ``cfg.estimator``."""
    if cfg.estimator in ("mdpde", "mle"):
        return fit_mdpde(data, link, cfg.alpha if cfg.estimator == "mdpde" else 0.0, cfg)
    if cfg.estimator == "croux_wml":
        return fit_croux_wml(data, link, cfg)
    return fit_iannario(data, link, cfg.c, cfg.weight_kind, cfg)
