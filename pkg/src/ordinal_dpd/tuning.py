"""Data-driven choice of alpha by the Warwick-Jones empirical MSE."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoConvergence, SingularPsi
from .estimate import FitConfig, fit_mdpde
from .inference import Sandwich, sandwich
from .model import Dataset, Theta


def default_grid() -> tuple:
    return tuple(np.round(np.arange(101) * 0.01, 2))


@dataclass(frozen=True)
class TuneConfig:
    """Grid and pilot for the alpha search.

    ``pilot`` is either a float (the pilot is the MDPDE at that alpha) or a
    fixed :class:`Theta`.
    """

    alpha_grid: tuple = field(default_factory=default_grid)
    pilot: float | Theta = 0.5
    warm_start: bool = True
    n_jobs: int = 1
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid:
            raise ValueError("alpha grid is empty")
        if any(not 0.0 <= a <= 1.0 for a in grid):
            raise ValueError("alpha grid must lie within [0, 1]")
        object.__setattr__(self, "alpha_grid", tuple(sorted(set(grid))))
        if self.n_jobs != 1 and self.warm_start:
            raise ValueError("parallel grid fitting requires warm_start=False")


def wj_mse(theta_alpha: Theta, theta_pilot: Theta, sw: Sandwich, n: int) -> float:
    """Squared distance to the pilot plus tr(Psi^-1 Omega Psi^-1) / n."""
    diff = theta_alpha.vector() - theta_pilot.vector()
    if diff.size != sw.cov.shape[0]:
        raise ValueError("parameter and covariance dimensions disagree")
    return float(diff @ diff) + sw.trace / n


@dataclass
class TuneRow:
    alpha: float
    mse: float
    se: float
    converged: bool
    theta: Theta | None


@dataclass
class TuneResult:
    alpha_opt: float
    mse_opt: float
    theta_opt: Theta
    pilot: Theta
    rows: list

    def to_dict(self) -> dict:
        return {"alpha_opt": self.alpha_opt, "mse": self.mse_opt,
                "gamma": self.theta_opt.gamma.tolist(), "beta": self.theta_opt.beta.tolist(),
                "pilot": self.pilot.to_dict()}


def _fit_alpha(data, link, a, cfg, init):
    c = replace(cfg, init=init, covariance=False, raise_on_failure=True)
    try:
        res = fit_mdpde(data, link, a, c)
    except NoConvergence as exc:
        return exc.result, False
    return res, res.converged


def _score(data, link, a, res, ok, pilot):
    if res is None or not ok:
        return TuneRow(a, math.nan, math.nan, False, None if res is None else res.theta_hat)
    try:
        sw = sandwich(res.theta_hat, link, data, a)
    except (SingularPsi, ArithmeticError):
        return TuneRow(a, math.nan, math.nan, False, res.theta_hat)
    return TuneRow(a, wj_mse(res.theta_hat, pilot, sw, data.n), sw.total_se, True, res.theta_hat)


def argmin_alpha(rows) -> TuneRow:
    """Smallest finite MSE; ties go to the smaller alpha."""
    ok = [r for r in rows if r.converged and np.isfinite(r.mse)]
    if not ok:
        raise NoConvergence("no grid point produced a finite MSE")
    return min(ok, key=lambda r: (r.mse, r.alpha))


def select_alpha(data: Dataset, link, cfg: TuneConfig | None = None) -> TuneResult:
    cfg = TuneConfig() if cfg is None else cfg
    if isinstance(cfg.pilot, Theta):
        pilot = cfg.pilot
    else:
        pilot = fit_mdpde(data, link, float(cfg.pilot), replace(cfg.fit, covariance=False)).theta_hat
    grid = cfg.alpha_grid
    if cfg.warm_start:
        rows = []
        init = cfg.fit.init
        for a in grid:
            res, ok = _fit_alpha(data, link, a, cfg.fit, init)
            if ok:
                init = res.theta_hat
            rows.append(_score(data, link, a, res, ok, pilot))
    else:
        def one(a):
            res, ok = _fit_alpha(data, link, a, cfg.fit, cfg.fit.init)
            return _score(data, link, a, res, ok, pilot)
        if cfg.n_jobs == 1:
            rows = [one(a) for a in grid]
        else:
            from joblib import Parallel, delayed
            rows = Parallel(n_jobs=cfg.n_jobs)(delayed(one)(a) for a in grid)
    best = argmin_alpha(rows)
    return TuneResult(best.alpha, best.mse, best.theta, pilot, rows)


def write_tune_csv(result: TuneResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "mse", "se", "converged"])
        for r in result.rows:
            w.writerow(["%.17g" % r.alpha, "%.17g" % r.mse, "%.17g" % r.se, str(r.converged).lower()])
