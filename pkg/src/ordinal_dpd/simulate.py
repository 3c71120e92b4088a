"""Simulation models, contamination and the Monte Carlo comparison harness.

Every replication draws from its own counter-based stream
``Philox(SeedSequence([seed, rep]))``, so results do not depend on the
order in which replications run.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientLowPredictor, NoConvergence
from .estimate import FitConfig, fit, iannario_defaults
from .links import get_link
from .model import Dataset, Theta

# (gamma, beta) per (model, link); unlisted pairings are not part of the design
_PARAMS = {
    (1, "probit"): ((-0.7, 0.0, 1.5, 2.9), (2.5, 1.2, 0.5)),
    (1, "cloglog"): ((-0.7, 0.0, 1.5, 2.9), (2.5, 1.2, 0.5)),
    (2, "probit"): ((-1.7, -0.5, 0.5, 1.7), (1.5,)),
    (2, "logit"): ((-2.1, -0.6, 0.6, 2.1), (1.5,)),
    (2, "cauchit"): ((-2.1, -0.6, 0.6, 2.1), (1.5,)),
    (3, "probit"): ((-2.3, 0.0, 2.3), (1.5, 0.7)),
    (3, "logit"): ((-2.6, 0.0, 2.6), (1.5, 0.7)),
    (4, "probit"): ((-3.8, 3.8), (2.5, 1.2, 0.7)),
    (4, "logit"): ((-4.0, 4.0), (2.5, 1.2, 0.7)),
    (5, "probit"): ((-1.0, 1.0, 3.0), (2.5, 1.2, 0.7)),
    (5, "cloglog"): ((-1.0, 1.0, 3.0), (2.5, 1.2, 0.7)),
    (5, "logit"): ((-1.4, 1.1, 3.4), (2.5, 1.2, 0.7)),
}

MODEL3_COV = np.array([[1.0, 1.2], [1.2, 4.0]])
MODEL4_COV = np.array([[1.0, 1.5, 0.8], [1.5, 4.0, 2.5], [0.8, 2.5, 9.0]])

COVARIATE_NOTES = {
    1: "three exclusive 0/1 dummies; the four states (none, X1, X2, X3) drawn with probability 1/4 each",
    2: "X ~ N(0, 1)",
    3: "(X1, X2) ~ N(0, [[1, 1.2], [1.2, 4]])",
    4: "(X1, X2, X3) ~ N(0, [[1, 1.5, 0.8], [1.5, 4, 2.5], [0.8, 2.5, 9]])",
    5: "regressors (D, X, XD) with D ~ Bernoulli(1/2), X ~ N(0, 1)",
}


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep)])))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class ModelSpec:
    model_id: int
    link: str
    n: int = 150

    def __post_init__(self):
        kind = get_link(self.link).kind
        object.__setattr__(self, "link", kind)
        if (self.model_id, kind) not in _PARAMS:
            raise ValueError(f"model {self.model_id} is not defined with the {kind} link")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def gamma_true(self) -> np.ndarray:
        return np.array(_PARAMS[(self.model_id, self.link)][0])

    @property
    def beta_true(self) -> np.ndarray:
        return np.array(_PARAMS[(self.model_id, self.link)][1])

    @property
    def theta_true(self) -> Theta:
        return Theta(self.gamma_true, self.beta_true)

    @property
    def m(self) -> int:
        return self.gamma_true.size + 1

    @property
    def covariates(self) -> str:
        return COVARIATE_NOTES[self.model_id]


def draw_covariates(model_id: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if model_id == 1:
        state = rng.integers(0, 4, size=n)
        X = np.zeros((n, 3))
        hit = state > 0
        X[np.flatnonzero(hit), state[hit] - 1] = 1.0
        return X
    if model_id == 2:
        return rng.standard_normal((n, 1))
    if model_id == 3:
        return rng.multivariate_normal(np.zeros(2), MODEL3_COV, size=n, method="cholesky")
    if model_id == 4:
        return rng.multivariate_normal(np.zeros(3), MODEL4_COV, size=n, method="cholesky")
    if model_id == 5:
        d = (rng.random(n) < 0.5).astype(float)
        x = rng.standard_normal(n)
        return np.column_stack([d, x, x * d])
    raise ValueError(f"unknown model {model_id}")


def responses(X, theta: Theta, link, rng: np.random.Generator) -> np.ndarray:
    """Threshold the latent x'beta + e at the cut-offs."""
    link = get_link(link)
    u = rng.random(X.shape[0])
    latent = X @ theta.beta + link.ppf(u)
    return 1 + np.searchsorted(theta.gamma, latent, side="left")


def generate(spec: ModelSpec, seed) -> Dataset:
    rng = _as_rng(seed)
    X = draw_covariates(spec.model_id, spec.n, rng)
    y = responses(X, spec.theta_true, spec.link, rng)
    return Dataset(X, y, spec.m)


def ges_design(model_id: int, n: int = 40, seed: int = 0) -> np.ndarray:
    """Covariates used for GES curves; Model 1 uses its four states once each."""
    if model_id == 1:
        return np.vstack([np.zeros(3), np.eye(3)])
    return draw_covariates(model_id, n, _as_rng(seed))


# ---------------------------------------------------------------------------
# contamination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContaminationSpec:
    kind: str = "none"
    eps: float = 0.0
    value: float = 5.0
    column: int = 0
    fit_link: str | None = None
    targeting: str = "low_predictor"

    def __post_init__(self):
        if self.kind not in ("none", "vertical", "horizontal", "link_misspec"):
            raise ValueError(f"unknown contamination {self.kind!r}")
        if self.kind in ("vertical", "horizontal") and not 0.0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 0.5)")
        if self.kind == "link_misspec" and self.fit_link is None:
            object.__setattr__(self, "fit_link", "cloglog")
        if self.targeting not in ("low_predictor", "uniform"):
            raise ValueError("targeting must be 'low_predictor' or 'uniform'")

    def count(self, n: int) -> int:
        # round first so 0.05 * 200 is not pushed to 11 by representation error
        return int(math.ceil(round(self.eps * n, 9)))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("vertical", "horizontal"):
            d["eps"] = self.eps
        if self.kind == "horizontal":
            d.update(value=self.value, column=self.column)
        if self.kind == "vertical" and self.targeting != "low_predictor":
            d["targeting"] = self.targeting
        if self.kind == "link_misspec":
            d["fit_link"] = self.fit_link
        return d

    @classmethod
    def from_dict(cls, d) -> "ContaminationSpec":
        if d is None or d == "none":
            return cls()
        if isinstance(d, str):
            return cls(kind=d)
        return cls(**d)


def contaminate(data: Dataset, spec: ContaminationSpec, model: ModelSpec, seed) -> Dataset:
    if spec.kind in ("none", "link_misspec"):
        return data
    rng = _as_rng(seed)
    k = spec.count(data.n)
    if k == 0:
        return data
    if spec.kind == "vertical":
        if spec.targeting == "low_predictor":
            eta = data.X @ model.beta_true
            cand = np.flatnonzero(eta < np.median(eta))
            if cand.size < k:
                warnings.warn(f"only {cand.size} rows below the median linear predictor; "
                              f"choosing {k} rows uniformly", InsufficientLowPredictor, stacklevel=2)
                cand = np.arange(data.n)
        else:
            cand = np.arange(data.n)
        idx = rng.choice(cand, size=k, replace=False)
        y = data.y.copy()
        y[idx] = data.m
        return Dataset(data.X, y, data.m, data.columns)
    idx = rng.choice(data.n, size=k, replace=False)
    X = data.X.copy()
    X[idx, spec.column] = spec.value
    return Dataset(X, data.y, data.m, data.columns)


# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------

def parse_estimator(item) -> FitConfig:
    """``"mle"``, ``"mdpde:0.3"``, ``"croux_wml"``, ``"iannario"``,
    ``"iannario:w3:1.0"`` or a dict of :class:`FitConfig` fields."""
    if isinstance(item, FitConfig):
        return item
    if isinstance(item, dict):
        return FitConfig(**item)
    parts = str(item).split(":")
    name = parts[0]
    if name == "mdpde":
        return FitConfig(estimator="mdpde", alpha=float(parts[1]) if len(parts) > 1 else 0.0)
    if name == "iannario":
        kind = parts[1] if len(parts) > 1 and parts[1] else None
        c = float(parts[2]) if len(parts) > 2 else None
        return FitConfig(estimator="iannario", weight_kind=kind, c=c)
    return FitConfig(estimator=name)


@dataclass
class EstimatorSummary:
    label: str
    sqbias_gamma: float
    sqbias_beta: float
    mse_gamma: float
    mse_beta: float
    efficiency: float
    replications: int
    failures: int

    @property
    def mse(self) -> float:
        return self.mse_gamma + self.mse_beta


@dataclass
class McReport:
    model: ModelSpec
    contamination: ContaminationSpec
    B: int
    seed: int
    summaries: list
    estimates: list = field(repr=False, default_factory=list)
    exclusion_policy: str = "failed or non-converged fits are excluded per estimator and counted"

    def summary(self, label: str) -> EstimatorSummary:
        for s in self.summaries:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model.model_id, "link": self.model.link, "n": self.model.n,
            "B": self.B, "seed": self.seed, "contamination": self.contamination.to_dict(),
            "covariates": self.model.covariates, "exclusion_policy": self.exclusion_policy,
            "estimators": [s.__dict__ | {"mse": s.mse} for s in self.summaries],
        }


CSV_COLUMNS = ("estimator", "sqbias_gamma", "mse_gamma", "sqbias_beta", "mse_beta",
               "efficiency", "replications", "failures")


def write_report_csv(report: McReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for s in report.summaries:
            w.writerow([s.label] + ["%.17g" % getattr(s, c) for c in CSV_COLUMNS[1:6]]
                       + [s.replications, s.failures])


def _study_config(cfg: FitConfig, link) -> FitConfig:
    if cfg.estimator == "iannario":
        kind, c = iannario_defaults(link)
        cfg = replace(cfg, weight_kind=cfg.weight_kind or kind, c=cfg.c if cfg.c is not None else c)
    # dummies and binary regressors have zero MAD; use the documented fallback
    return replace(cfg, covariance=False, raise_on_failure=True, zero_mad="fallback")


def _replicate(model: ModelSpec, contam: ContaminationSpec, estimators, seed: int, rep: int):
    rng = replication_rng(seed, rep)
    data = generate(model, rng)
    data = contaminate(data, contam, model, rng)
    fit_link = contam.fit_link if contam.kind == "link_misspec" else model.link
    out = []
    for cfg in estimators:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = fit(data, fit_link, cfg)
            out.append(res.theta_hat.vector())
        except (NoConvergence, ArithmeticError, ValueError):
            out.append(None)
    return out


def _summaries(model, labels, est):
    K = model.m - 1
    g0, b0 = model.gamma_true, model.beta_true
    stats = []
    for e, label in enumerate(labels):
        ok = [v[e] for v in est if v[e] is not None]
        fails = len(est) - len(ok)
        if not ok:
            stats.append([label, math.nan, math.nan, math.nan, math.nan, len(ok), fails])
            continue
        T = np.array(ok)
        dg, db = T[:, :K] - g0, T[:, K:] - b0
        stats.append([label,
                      float(np.sum((T[:, :K].mean(axis=0) - g0) ** 2)),
                      float(np.sum((T[:, K:].mean(axis=0) - b0) ** 2)),
                      float(np.mean(np.sum(dg * dg, axis=1))),
                      float(np.mean(np.sum(db * db, axis=1))),
                      len(ok), fails])
    base = next((s for s in stats if s[0] == "mle"), None)
    out = []
    for s in stats:
        mse = s[3] + s[4]
        eff = (base[3] + base[4]) / mse if base is not None else math.nan
        if s is base:
            eff = 1.0
        out.append(EstimatorSummary(s[0], s[1], s[2], s[3], s[4], eff, s[5], s[6]))
    return out


def run_study(model: ModelSpec, contam: ContaminationSpec, estimators, B: int, seed: int,
              n_jobs: int = 1) -> McReport:
    """Fit every estimator on B replications and aggregate squared bias and MSE.

    Efficiency is MSE_ML / MSE_estimator on the total (gamma and beta) MSE and
    needs ``"mle"`` in the estimator list.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    fit_link = contam.fit_link if contam.kind == "link_misspec" else model.link
    cfgs = [_study_config(parse_estimator(e), fit_link) for e in estimators]
    labels = [c.label for c in cfgs]
    if n_jobs == 1:
        est = [_replicate(model, contam, cfgs, seed, r) for r in range(B)]
    else:
        from joblib import Parallel, delayed
        est = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(model, contam, cfgs, seed, r) for r in range(B))
    return McReport(model, contam, int(B), int(seed), _summaries(model, labels, est), est)


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    model: ModelSpec
    contamination: ContaminationSpec
    estimators: list
    B: int
    seed: int

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        missing = {"model_id", "link", "n", "B", "estimators", "seed"} - set(d)
        if missing:
            raise ValueError(f"scenario is missing keys {sorted(missing)}")
        return cls(ModelSpec(int(d["model_id"]), d["link"], int(d["n"])),
                   ContaminationSpec.from_dict(d.get("contamination")),
                   list(d["estimators"]), int(d["B"]), int(d["seed"]))

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def run(self, n_jobs: int = 1) -> McReport:
        return run_study(self.model, self.contamination, self.estimators, self.B, self.seed, n_jobs)
