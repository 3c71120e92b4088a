"""Influence functions, gross error sensitivity and the implosion experiment.

Influence computations take the model as the truth: Psi_n and xi_i are
evaluated with the model probabilities at the supplied parameter.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ExactTooLarge, NoConvergence
from .estimate import FitConfig, FitResult, fit
from .inference import inverse_psi, model_psi_n, xi_rows
from .links import _TABLE, get_link
from .model import Dataset, Theta, frame, lift_vectors, log_probs_from_args, predict_categories
from .objective import check_alpha

EXACT_CAP = 10 ** 6
HEURISTIC_STARTS = 8


# ---------------------------------------------------------------------------
# influence function
# ---------------------------------------------------------------------------

def influence_table(theta: Theta, link, X, alpha: float, psi_n_inv=None) -> np.ndarray:
    """All per-observation contributions v_i(t), shape (n, m, d).

    v_i(t) = (1/n) Psi_n^-1 [p_i(t)^alpha u_i(t) - xi_i(alpha)].
    """
    alpha = check_alpha(alpha)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    fr = frame(theta, link, X)
    if psi_n_inv is None:
        psi_n_inv = inverse_psi(model_psi_n(theta, link, X, alpha))
    C = fr.coef_first()
    with np.errstate(invalid="ignore", over="ignore"):
        W = np.exp(alpha * fr.logp)[:, :, None] * C
    W[~np.isfinite(W)] = 0.0
    coef = W - xi_rows(fr, alpha)[:, None, :]
    V = lift_vectors(coef, fr.X)
    return V @ np.asarray(psi_n_inv).T / n


def influence_contrib(theta: Theta, link, x_i, t_i: int, alpha: float, psi_n_inv,
                      n: int = 1) -> np.ndarray:
    """Contribution of contaminating observation ``i`` at category ``t_i``.

    ``psi_n_inv`` is the inverse of Psi_n over the whole design and ``n``
    its size; the 1/n factor is applied here.
    """
    if not 1 <= int(t_i) <= theta.m:
        raise ValueError(f"t_i must lie in 1..{theta.m}")
    V = influence_table(theta, link, np.atleast_2d(x_i), alpha, psi_n_inv)
    return V[0, int(t_i) - 1] / n


# ---------------------------------------------------------------------------
# gross error sensitivity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GesRequest:
    theta: Theta
    link: str
    X: np.ndarray
    alpha_grid: tuple = tuple(np.round(np.arange(0.0, 1.0001, 0.1), 10))
    mode: str = "joint_heuristic"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("per_observation", "joint_exact", "joint_heuristic"):
            raise ValueError(f"unknown GES mode {self.mode!r}")
        object.__setattr__(self, "alpha_grid", tuple(check_alpha(a) for a in self.alpha_grid))
        object.__setattr__(self, "X", np.atleast_2d(np.asarray(self.X, dtype=float)))


@dataclass
class GesResult:
    alpha: float
    joint: float
    components: np.ndarray
    argmax: np.ndarray | None = None


def component_ges(V: np.ndarray) -> np.ndarray:
    """Exact per-component maxima of |sum_i v_i(t_i)_k|; separable over i."""
    hi = V.max(axis=1).sum(axis=0)
    lo = V.min(axis=1).sum(axis=0)
    return np.maximum(np.abs(hi), np.abs(lo))


def joint_exact(V: np.ndarray):
    n, m, d = V.shape
    if m ** n > EXACT_CAP:
        raise ExactTooLarge(f"m**n = {m}**{n} exceeds the enumeration cap {EXACT_CAP}")
    S = np.zeros((1, d))
    for i in range(n):
        S = (S[:, None, :] + V[i][None, :, :]).reshape(-1, d)
    norms = np.sqrt(np.sum(S * S, axis=1))
    k = int(np.argmax(norms))
    t = np.array(np.unravel_index(k, (m,) * n)) + 1
    return float(norms[k]), t


def _ascend(V, u):
    n = V.shape[0]
    rows = np.arange(n)
    t = None
    for _ in range(1000):
        t_new = np.argmax(V @ u, axis=1)
        if t is not None and np.array_equal(t_new, t):
            break
        t = t_new
        s = V[rows, t].sum(axis=0)
        ns = np.linalg.norm(s)
        if ns == 0.0:
            break
        u = s / ns
    s = V[rows, t].sum(axis=0)
    return float(np.linalg.norm(s)), t


def joint_heuristic(V: np.ndarray, seed: int = 0, starts: int = HEURISTIC_STARTS):
    """Alternating maximisation of ||sum_i v_i(t_i)|| from several directions.

    Random unit directions are tried together with the signed coordinate
    axes; the best fixed point is returned.
    """
    n, m, d = V.shape
    rng = np.random.default_rng(seed)
    dirs = [rng.standard_normal(d) for _ in range(starts)]
    eye = np.eye(d)
    dirs += [eye[k] for k in range(d)] + [-eye[k] for k in range(d)]
    best, best_t = -1.0, None
    for u in dirs:
        val, t = _ascend(V, u / np.linalg.norm(u))
        if val > best:
            best, best_t = val, t
    return best, best_t + 1


def ges(req: GesRequest) -> list[GesResult]:
    """GES over the alpha grid; joint norm per ``req.mode`` plus exact components."""
    if req.theta.m < 2:
        raise ValueError("GES needs at least two categories")
    out = []
    for a in req.alpha_grid:
        V = influence_table(req.theta, req.link, req.X, a)
        comp = component_ges(V)
        if req.mode == "joint_exact":
            joint, t = joint_exact(V)
        elif req.mode == "joint_heuristic":
            joint, t = joint_heuristic(V, req.seed)
        else:
            norms = np.linalg.norm(V, axis=2)
            joint, t = float(norms.max(axis=1).max()), None
        out.append(GesResult(a, joint, comp, t))
    return out


# ---------------------------------------------------------------------------
# generalized residuals
# ---------------------------------------------------------------------------

def _residual_parts(theta: Theta, link, t_grid):
    link = get_link(link)
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    A = theta.gamma[None, :] - t[:, None]
    logf = _TABLE[link.kind][4](A)
    logp = log_probs_from_args(link, A)
    return logf, logp


def _residual_curve(logf, logp, j0, power):
    K = logf.shape[1]
    out = np.zeros(logp.shape[0])
    if j0 < K:
        out += np.exp(logf[:, j0] + (power - 1.0) * logp[:, j0])
    if j0 > 0:
        out -= np.exp(logf[:, j0 - 1] + (power - 1.0) * logp[:, j0])
    return out


def generalized_residual(theta: Theta, link, j: int, t_grid) -> np.ndarray:
    """A_j(t) = [f(gamma_j - t) - f(gamma_{j-1} - t)] / p_j(t)."""
    if not 1 <= int(j) <= theta.m:
        raise ValueError(f"category {j} outside 1..{theta.m}")
    logf, logp = _residual_parts(theta, link, t_grid)
    with np.errstate(over="ignore"):
        return _residual_curve(logf, logp, int(j) - 1, 0.0)


def dpd_generalized_residual(theta: Theta, link, alpha: float, j: int, t_grid) -> np.ndarray:
    """B_j(t) = A_j(t) p_j(t)^alpha over a grid of linear predictors."""
    alpha = check_alpha(alpha)
    if not 1 <= int(j) <= theta.m:
        raise ValueError(f"category {j} outside 1..{theta.m}")
    logf, logp = _residual_parts(theta, link, t_grid)
    with np.errstate(over="ignore"):
        return _residual_curve(logf, logp, int(j) - 1, alpha)


# ---------------------------------------------------------------------------
# implosion experiment
# ---------------------------------------------------------------------------

IMPLOSION_BETA = (-1.0, 1.5)
IMPLOSION_GAMMA = (-1.0, 1.0)
IMPLOSION_SEED = 20230


def implosion_base_sample(seed: int = IMPLOSION_SEED, n: int = 50) -> Dataset:
    """Two standard-normal covariates, logistic errors, three categories."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    latent = X @ np.asarray(IMPLOSION_BETA) + rng.logistic(size=n)
    y = 1 + np.searchsorted(np.asarray(IMPLOSION_GAMMA), latent)
    return Dataset(X, y, m=3)


@dataclass(frozen=True)
class ImplosionScenario:
    base: Dataset
    beta_true: tuple = IMPLOSION_BETA
    gamma_true: tuple = IMPLOSION_GAMMA
    pattern: tuple = (1.0, -1.0)
    response: int = 3
    s_grid: tuple = (8.0,)
    counts: tuple = tuple(range(1, 51))
    name: str = "implosion"
    link: str = "logit"
    #: "clean_fit" starts every cell at the same estimator's fit on the base
    #: sample; "default" uses the zero-slope start
    start: str = "clean_fit"

    def __post_init__(self):
        if not 1 <= self.response <= self.base.m:
            raise ValueError(f"outlier response must lie in 1..{self.base.m}")
        if len(self.pattern) != self.base.p:
            raise ValueError("outlier pattern length must match the number of covariates")

    def augmented(self, s: float, k: int) -> Dataset:
        x = np.asarray(self.pattern, dtype=float) * s
        X = np.vstack([self.base.X, np.tile(x, (k, 1))])
        y = np.concatenate([self.base.y, np.full(k, self.response)])
        return Dataset(X, y, self.base.m, self.base.columns)


@dataclass
class ImplosionRow:
    scenario: str
    s: float
    outlier_count: int
    alpha: float | None
    estimator: str
    beta_norm: float
    misclass_rate: float
    converged: bool

    def as_tuple(self):
        return (self.scenario, self.s, self.outlier_count, self.alpha, self.estimator,
                self.beta_norm, self.misclass_rate, self.converged)


IMPLOSION_COLUMNS = ("scenario", "s", "outlier_count", "alpha", "estimator",
                     "beta_norm", "misclass_rate", "converged")


def _fit_cell(data, link, cfg) -> tuple[FitResult | None, bool]:
    try:
        res = fit(data, link, replace(cfg, covariance=False))
        return res, res.converged
    except NoConvergence as exc:
        return exc.result, False


def _clean_start(sc: ImplosionScenario, cfg: FitConfig) -> Theta:
    # the DPD loss is not convex: from a zero-slope start the optimizer
    # can settle in the imploded basin even when a robust minimum exists
    res, _ = _fit_cell(sc.base, sc.link, cfg)
    return res.theta_hat


def implosion_experiment(sc: ImplosionScenario, estimators: list[FitConfig],
                         n_jobs: int = 1) -> list[ImplosionRow]:
    """Fit every (s, outlier count, estimator) cell and record ||beta|| and misclassification."""
    if sc.start == "clean_fit":
        estimators = [cfg if cfg.init is not None
                      else replace(cfg, init=_clean_start(sc, cfg)) for cfg in estimators]
    elif sc.start != "default":
        raise ValueError(f"unknown start rule {sc.start!r}")
    cells = list(itertools.product(sc.s_grid, sc.counts, range(len(estimators))))

    def run(cell):
        s, k, e = cell
        cfg = estimators[e]
        data = sc.augmented(s, k)
        res, ok = _fit_cell(data, sc.link, cfg)
        if res is None:
            return ImplosionRow(sc.name, s, k, cfg.alpha if cfg.estimator == "mdpde" else None,
                                cfg.label, math.nan, math.nan, False)
        pred, _ = predict_categories(res.theta_hat, sc.link, data.X)
        return ImplosionRow(sc.name, float(s), int(k),
                            cfg.alpha if cfg.estimator in ("mdpde", "mle") else None,
                            cfg.label, float(np.linalg.norm(res.theta_hat.beta)),
                            float(np.mean(pred != data.y)), bool(ok))

    if n_jobs == 1:
        return [run(c) for c in cells]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=n_jobs)(delayed(run)(c) for c in cells)


def implosion_minimum(rows: list[ImplosionRow], estimator: str, s: float, n_base: int):
    """Smallest ||beta_hat|| over outlier counts, with its outlier proportion."""
    cand = [r for r in rows if r.estimator == estimator and r.s == s and r.converged]
    if not cand:
        return math.nan, math.nan
    best = min(cand, key=lambda r: (r.beta_norm, r.outlier_count))
    return best.beta_norm, best.outlier_count / (best.outlier_count + n_base)


def write_implosion_csv(rows: list[ImplosionRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(IMPLOSION_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r.as_tuple()])


def _fmt(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return "%.17g" % v
    return v
