"""Cumulative-link ordinal model: parameters, data, probabilities, derivatives.

Parameter vectors are always stacked as ``(gamma_1..gamma_{m-1}, beta_1..beta_p)``.
Categories are labelled ``1..m`` in the public API.

Internally every derivative is expressed through the latent arguments
``a_k = gamma_k - x'beta`` (k = 1..m-1).  Since ``p_j = F(a_j) - F(a_{j-1})``,
the gradient of any function of the probabilities is a combination of the
direction vectors ``g_k = d a_k / d theta = (e_k, -x)``; the helpers here
return coefficients on those directions and :func:`lift_vectors` /
:func:`lift_matrices` map them back to theta-space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProbability, InvalidData, InvalidTheta
from .links import Link, _TABLE, _log1mexp, get_link

#: probabilities at or below this are treated as numerically zero
UNDERFLOW = 1e-300
LOG_UNDERFLOW = np.log(UNDERFLOW)


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Theta:
    """Ordered cut-offs ``gamma`` (length m-1) and slopes ``beta`` (length p)."""

    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        gamma = _frozen(np.atleast_1d(self.gamma))
        beta = _frozen(np.atleast_1d(self.beta))
        if gamma.ndim != 1 or beta.ndim != 1 or gamma.size < 1 or beta.size < 1:
            raise InvalidTheta("gamma and beta must be non-empty vectors")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(beta))):
            raise InvalidTheta("theta has non-finite entries")
        if np.any(np.diff(gamma) <= 0):
            raise InvalidTheta(f"cut-offs must be strictly increasing: {gamma}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.gamma.size + 1

    @property
    def p(self) -> int:
        return self.beta.size

    @property
    def dim(self) -> int:
        return self.gamma.size + self.beta.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.beta])

    @classmethod
    def from_vector(cls, v, m: int) -> "Theta":
        v = np.asarray(v, dtype=float)
        return cls(v[: m - 1], v[m - 1:])

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.tolist(), "beta": self.beta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Theta":
        return cls(d["gamma"], d["beta"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Theta":
        return cls.from_dict(json.loads(s))

    def __eq__(self, other):
        if not isinstance(other, Theta):
            return NotImplemented
        return (np.array_equal(self.gamma, other.gamma)
                and np.array_equal(self.beta, other.beta))

    def __repr__(self):
        return f"Theta(gamma={self.gamma.tolist()}, beta={self.beta.tolist()})"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Fixed design ``X`` (n x p) and ordinal responses ``y`` in ``1..m``.

    ``m`` defaults to the largest observed label.
    """

    X: np.ndarray
    y: np.ndarray
    m: int | None = None
    columns: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y_raw = np.asarray(self.y)
        if y_raw.ndim != 1:
            raise InvalidData("y must be a vector")
        y = y_raw.astype(np.int64)
        if np.any(y != y_raw):
            raise InvalidData("responses must be integers")
        if X.ndim != 2 or X.shape[0] != y.size:
            raise InvalidData(f"X has shape {X.shape} but y has {y.size} entries")
        if y.size < 1:
            raise InvalidData("dataset is empty")
        if not np.all(np.isfinite(X)):
            raise InvalidData("X has non-finite entries")
        m = int(self.m) if self.m is not None else int(y.max())
        if m < 2:
            raise InvalidData("need at least two categories")
        if y.min() < 1 or y.max() > m:
            raise InvalidData(f"responses must lie in 1..{m}")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y, np.int64))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.m, self.columns)

    def counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.m + 1)[1:]


# ---------------------------------------------------------------------------
# vectorised core
# ---------------------------------------------------------------------------

@dataclass
class Frame:
    """Everything needed for derivatives at one theta over a design ``X``.

    ``A`` is the n x (m-1) matrix of latent arguments, ``logf`` the log
    density there, ``logp`` the n x m matrix of log category probabilities.
    """

    link: Link
    X: np.ndarray
    A: np.ndarray
    logf: np.ndarray
    logp: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return np.exp(self.logp)

    def coef_first(self) -> np.ndarray:
        """Score coefficients C with u_j = sum_k C[:, j, k] g_k (n x m x K)."""
        n, m = self.logp.shape
        K = m - 1
        C = np.zeros((n, m, K))
        idx = np.arange(K)
        with np.errstate(over="ignore"):
            C[:, idx, idx] = np.exp(self.logf - self.logp[:, :K])
            C[:, idx + 1, idx] = -np.exp(self.logf - self.logp[:, 1:])
        return C

    def coef_second(self) -> np.ndarray:
        """Diagonal coefficients D with hess(p_j)/p_j = sum_k D[:, j, k] g_k g_k'."""
        n, m = self.logp.shape
        K = m - 1
        dlog = _TABLE[self.link.kind][5](self.A)
        D = np.zeros((n, m, K))
        idx = np.arange(K)
        with np.errstate(over="ignore", invalid="ignore"):
            up = np.exp(self.logf - self.logp[:, :K]) * dlog
            lo = -np.exp(self.logf - self.logp[:, 1:]) * dlog
        # 0 * inf = 0 where the density has vanished
        dead = ~np.isfinite(self.logf)
        up[dead] = 0.0
        lo[dead] = 0.0
        D[:, idx, idx] = up
        D[:, idx + 1, idx] = lo
        return D


def log_probs_from_args(link: Link, A: np.ndarray):
    """Log category probabilities from latent arguments ``A`` (n x (m-1))."""
    fns = _TABLE[link.kind]
    n, K = A.shape
    m = K + 1
    logp = np.empty((n, m))
    logcdf = fns[2](A)
    logsf = fns[3](A)
    logp[:, 0] = logcdf[:, 0]
    logp[:, -1] = logsf[:, -1]
    if K > 1:
        lc_a, lc_b = logcdf[:, 1:], logcdf[:, :-1]
        ls_a, ls_b = logsf[:, 1:], logsf[:, :-1]
        b = A[:, :-1]
        upper = b >= 0.0
        # both arguments in the upper tail: difference of survival values
        with np.errstate(invalid="ignore"):
            via_sf = ls_b + _log1mexp(np.minimum(ls_a - ls_b, 0.0))
            via_cdf = lc_a + _log1mexp(np.minimum(lc_b - lc_a, 0.0))
        logp[:, 1:-1] = np.where(upper, via_sf, via_cdf)
    return logp


def frame(theta: Theta, link, X) -> Frame:
    link = get_link(link)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != theta.p:
        raise InvalidTheta(f"theta has {theta.p} slopes but X has {X.shape[1]} columns")
    eta = X @ theta.beta
    A = theta.gamma[None, :] - eta[:, None]
    logf = _TABLE[link.kind][4](A)
    logp = log_probs_from_args(link, A)
    return Frame(link, X, A, logf, logp)


def lift_vectors(c: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Map a-space coefficients (..., n, K) to theta-space (..., n, K+p).

    With g_k = (e_k, -x_i): sum_k c_k g_k = (c, -x_i * sum_k c_k).
    """
    s = c.sum(axis=-1)
    Xb = X.reshape((X.shape[0],) + (1,) * (c.ndim - 2) + (X.shape[1],))
    return np.concatenate([c, -s[..., None] * Xb], axis=-1)


def lift_matrices(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    """sum_i G_i M_i G_i' for per-row K x K matrices ``M`` (n x K x K)."""
    K = M.shape[1]
    p = X.shape[1]
    out = np.empty((K + p, K + p))
    out[:K, :K] = M.sum(axis=0)
    row = M.sum(axis=2)               # M_i 1
    out[:K, K:] = -row.T @ X
    out[K:, :K] = out[:K, K:].T
    tot = M.sum(axis=(1, 2))          # 1' M_i 1
    out[K:, K:] = (X * tot[:, None]).T @ X
    return out


def lift_matrix_rows(M: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Per-row version of :func:`lift_matrices` (n x d x d), for small n."""
    n, K, _ = M.shape
    p = X.shape[1]
    out = np.empty((n, K + p, K + p))
    out[:, :K, :K] = M
    row = M.sum(axis=2)
    out[:, :K, K:] = -row[:, :, None] * X[:, None, :]
    out[:, K:, :K] = np.transpose(out[:, :K, K:], (0, 2, 1))
    tot = M.sum(axis=(1, 2))
    out[:, K:, K:] = tot[:, None, None] * X[:, :, None] * X[:, None, :]
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _category(j, m):
    j = int(j)
    if not 1 <= j <= m:
        raise ValueError(f"category {j} outside 1..{m}")
    return j - 1


def category_probs(theta: Theta, link, x) -> np.ndarray:
    """Probability vector over the m categories for one covariate row.

    A 2-d ``x`` returns the n x m matrix, one row per observation.
    """
    x = np.asarray(x, dtype=float)
    fr = frame(theta, link, np.atleast_2d(x))
    p = fr.p
    return p[0] if x.ndim == 1 else p


def log_likelihood(theta: Theta, link, data: Dataset) -> float:
    fr = frame(theta, link, data.X)
    lp = fr.logp[np.arange(data.n), data.y - 1]
    if np.any(lp <= LOG_UNDERFLOW):
        raise DegenerateProbability(
            f"{int(np.sum(lp <= LOG_UNDERFLOW))} observed-category probabilities underflow")
    return float(lp.sum())


def prob_gradient(theta: Theta, link, x, j) -> np.ndarray:
    """Gradient of p_j(x) with respect to (gamma, beta)."""
    link = get_link(link)
    jj = _category(j, theta.m)
    x = np.asarray(x, dtype=float)
    a = theta.gamma - x @ theta.beta
    K = theta.m - 1
    c = np.zeros(K)
    if jj < K:
        c[jj] += link.pdf(a[jj])
    if jj > 0:
        c[jj - 1] -= link.pdf(a[jj - 1])
    return np.concatenate([c, -x * c.sum()])


def score(theta: Theta, link, x, j) -> np.ndarray:
    """Likelihood score u_j = grad p_j / p_j."""
    jj = _category(j, theta.m)
    fr = frame(theta, link, np.atleast_2d(x))
    if fr.logp[0, jj] <= LOG_UNDERFLOW:
        raise DegenerateProbability(f"p_{j} underflows at x={x}")
    C = fr.coef_first()[0, jj]
    return lift_vectors(C[None, :], fr.X)[0]


def prob_hessian(theta: Theta, link, x, j) -> np.ndarray:
    """Analytic Hessian of p_j(x) with respect to (gamma, beta)."""
    link = get_link(link)
    jj = _category(j, theta.m)
    x = np.asarray(x, dtype=float)
    a = theta.gamma - x @ theta.beta
    K = theta.m - 1
    d = np.zeros(K)
    if jj < K:
        d[jj] += link.pdf_deriv(a[jj])
    if jj > 0:
        d[jj - 1] -= link.pdf_deriv(a[jj - 1])
    H = lift_matrix_rows(np.diag(d)[None], x[None, :])[0]
    return 0.5 * (H + H.T)


def scores_all(theta: Theta, link, X) -> np.ndarray:
    """u_{i}(j) for every row and category (n x m x d)."""
    fr = frame(theta, link, X)
    C = fr.coef_first()
    return lift_vectors(C, fr.X)


def predict_categories(theta: Theta, link, X) -> tuple[np.ndarray, np.ndarray]:
    """Argmax category (ties to the smaller label) and probability matrix."""
    P = category_probs(theta, link, np.atleast_2d(X))
    return np.argmax(P, axis=1) + 1, P
