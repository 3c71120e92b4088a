"""Command-line interface.

Every subcommand writes its artifact to ``--out`` and a run record to
``<out>.meta.json`` holding the seed, a hash of the resolved configuration
and library versions. Exit status is 0 on success, 2 for data or input
errors and 3 when a fit fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .errors import InvalidData, InvalidTheta, NoConvergence, OrdinalDPDError, ZeroMadColumn
from .estimate import FitConfig, fit
from .links import LINK_NAMES
from .model import Dataset, Theta, predict_categories
from .preprocess import robust_trim, standardize
from .robustness import (GesRequest, ImplosionScenario, dpd_generalized_residual,
                         generalized_residual, ges, implosion_base_sample, implosion_experiment,
                         implosion_minimum, write_implosion_csv, IMPLOSION_SEED)
from .simulate import ModelSpec, Scenario, ges_design, write_report_csv
from .tuning import TuneConfig, select_alpha, write_tune_csv

EXIT_OK, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3


class DataError(Exception):
    """Bad input file, column or flag value."""


# ---------------------------------------------------------------------------
# input
# ---------------------------------------------------------------------------

def read_table(path, delimiter=None):
    """Header plus an all-numeric float matrix; any non-numeric cell is an error."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    if delimiter is None:
        try:
            delimiter = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t").delimiter
        except (csv.Error, IndexError):
            delimiter = ","
    rows = list(csv.reader(text.splitlines(), delimiter=delimiter))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip().strip('"') for h in rows[0]]
    body = [r for r in rows[1:] if r]
    values = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(r)} fields, header has {len(header)}")
        for j, cell in enumerate(r):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {i + 2}, "
                                f"column {header[j]!r}") from None
    return header, values


def load_dataset(args) -> tuple[Dataset, dict]:
    header, values = read_table(args.data, args.delimiter)
    if args.response not in header:
        raise DataError(f"response column {args.response!r} not in {header}")
    k = header.index(args.response)
    raw_y = values[:, k]
    cols = [h for j, h in enumerate(header) if j != k]
    X = np.delete(values, k, axis=1)
    if args.label_map:
        with open(args.label_map, encoding="utf-8") as fh:
            mapping = {float(a): int(b) for a, b in json.load(fh).items()}
        missing = sorted(set(raw_y.tolist()) - set(mapping))
        if missing:
            raise DataError(f"labels {missing} absent from the label map")
        y = np.array([mapping[v] for v in raw_y])
    else:
        y = raw_y
    info = {"columns": cols}
    if args.standardize:
        X, med, mad = standardize(X, cols)
        info.update(median=med.tolist(), mad=mad.tolist())
    if args.trim_quantile is not None:
        keep = robust_trim(X, args.trim_quantile)
        info["trimmed"] = int(X.shape[0] - keep.size)
        X, y = X[keep], y[keep]
    return Dataset(X, y, args.categories, tuple(cols)), info


def split_indices(n: int, frac: float, seed: int):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    perm = rng.permutation(n)
    k = int(round(frac * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def fit_config(args) -> FitConfig:
    est = args.estimator
    alpha = args.alpha if est == "mdpde" else 0.0
    return FitConfig(estimator=est, alpha=alpha, c=args.c, weight_kind=args.weight,
                     max_iter=args.max_iter, grad_tol=args.grad_tol, zero_mad=args.zero_mad)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


def _version(name):
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return None


def config_hash(resolved: dict) -> str:
    """SHA-256 of the resolved settings; the output path is not part of the run."""
    core = {k: v for k, v in resolved.items() if k != "out"}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_metadata(args, resolved: dict, status: int, extra=None):
    meta = {
        "command": args.command,
        "seed": resolved.get("seed"),
        "config": resolved,
        "config_hash": config_hash(resolved),
        "status": status,
        "versions": {"package": _version("artifact"), "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }
    if extra:
        meta.update(extra)
    _dump(meta, f"{args.out}.meta.json")
    return meta


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def argv_from_config(resolved: dict, out=None) -> list[str]:
    """Command line that reproduces a run from its metadata ``config`` block."""
    ap = build_parser()
    sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    argv = [resolved["command"]]
    for act in sub.choices[resolved["command"]]._actions:
        if not act.option_strings or act.dest == "help":
            continue
        val = out if act.dest == "out" and out is not None else resolved.get(act.dest)
        if val is None or val is False:
            continue
        flag = act.option_strings[0]
        if val is True:
            argv.append(flag)
        elif isinstance(val, (list, tuple)):
            argv += [flag] + [str(v) for v in val]
        else:
            argv += [flag, str(val)]
    return argv


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fit(args):
    data, info = load_dataset(args)
    cfg = fit_config(args)
    out = {}
    train = data
    if args.split is not None:
        if args.seed is None:
            raise DataError("--split requires --seed")
        tr, te = split_indices(data.n, args.split, args.seed)
        train, test = data.subset(tr), data.subset(te)
    res = fit(train, args.link, cfg)
    out.update(res.to_dict())
    out.update(estimator=res.estimator, link=args.link, n=train.n, m=train.m,
               iterations=res.iterations, objective_value=res.objective_value,
               se=None if res.se is None else res.se.tolist(), preprocessing=info)
    if args.split is not None:
        pred, _ = predict_categories(res.theta_hat, args.link, test.X)
        out.update(n_test=test.n, accuracy=float(np.mean(pred == test.y)))
    _dump(out, args.out)
    return EXIT_OK


def cmd_tune(args):
    data, info = load_dataset(args)
    grid = tuple(np.round(np.arange(0.0, 1.0 + 1e-12, args.grid_step), 10))
    cfg = TuneConfig(alpha_grid=grid, pilot=args.pilot_alpha, fit=fit_config(args))
    res = select_alpha(data, args.link, cfg)
    write_tune_csv(res, args.out)
    _dump(res.to_dict() | {"preprocessing": info}, f"{args.out}.winner.json")
    return EXIT_OK


def cmd_predict(args):
    with open(args.model, encoding="utf-8") as fh:
        spec = json.load(fh)
    theta = Theta(spec["gamma"], spec["beta"])
    header, values = read_table(args.data, args.delimiter)
    truth = None
    if args.response and args.response in header:
        k = header.index(args.response)
        truth = values[:, k]
        values = np.delete(values, k, axis=1)
    if args.standardize:
        if "preprocessing" not in spec or "median" not in spec["preprocessing"]:
            raise DataError("model file carries no standardization constants")
        from .preprocess import MAD_SCALE
        pre = spec["preprocessing"]
        values = (values - np.asarray(pre["median"])) / (MAD_SCALE * np.asarray(pre["mad"]))
    pred, P = predict_categories(theta, args.link, values)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "predicted"] + [f"p{j}" for j in range(1, P.shape[1] + 1)])
        for i, (c, p) in enumerate(zip(pred, P)):
            w.writerow([i + 1, int(c)] + ["%.17g" % v for v in p])
    if truth is not None:
        acc = float(np.mean(pred == truth))
        print(f"accuracy {acc:.6f}")
    return EXIT_OK


def cmd_simulate(args):
    if not args.scenario:
        raise DataError("simulate needs --scenario")
    sc = Scenario.load(args.scenario)
    rep = sc.run(n_jobs=args.jobs)
    write_report_csv(rep, args.out)
    _dump(rep.to_dict(), f"{args.out}.json")
    return EXIT_OK


def cmd_ges(args):
    spec = ModelSpec(args.model_id, args.link, args.n)
    X = ges_design(args.model_id, args.n, args.seed or 0)
    grid = tuple(np.round(np.arange(0.0, 1.0 + 1e-12, args.grid_step), 10))
    res = ges(GesRequest(spec.theta_true, spec.link, X, grid, args.mode, args.seed or 0))
    K, p = spec.m - 1, spec.beta_true.size
    names = [f"gamma_{k}" for k in range(1, K + 1)] + [f"beta_{k}" for k in range(1, p + 1)]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "joint"] + names)
        for r in res:
            w.writerow(["%.17g" % r.alpha, "%.17g" % r.joint] + ["%.17g" % v for v in r.components])
    return EXIT_OK


def cmd_implode(args):
    seed = IMPLOSION_SEED if args.seed is None else args.seed
    sc = ImplosionScenario(implosion_base_sample(seed), s_grid=tuple(args.s),
                           counts=tuple(range(1, args.max_outliers + 1)))
    cfgs = [FitConfig(estimator="mdpde", alpha=a, raise_on_failure=False) for a in args.alphas]
    rows = implosion_experiment(sc, cfgs, n_jobs=args.jobs)
    write_implosion_csv(rows, args.out)
    for c in cfgs:
        for s in args.s:
            norm, prop = implosion_minimum(rows, c.label, s, sc.base.n)
            print(f"{c.label} s={s:g}: min |beta| {norm:.4f} at outlier proportion {prop:.4f}")
    return EXIT_OK


def cmd_residuals(args):
    theta = Theta(args.gamma, [1.0])
    t = np.linspace(args.t_min, args.t_max, args.points)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "alpha", "A", "B"])
        A = generalized_residual(theta, args.link, args.category, t)
        for a in args.alphas:
            B = dpd_generalized_residual(theta, args.link, a, args.category, t)
            for row in zip(t, A, B):
                w.writerow(["%.17g" % row[0], "%.17g" % a, "%.17g" % row[1], "%.17g" % row[2]])
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _data_flags(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--response", required=True, help="name of the ordinal response column")
    p.add_argument("--delimiter", default=None, help="field separator (sniffed if omitted)")
    p.add_argument("--label-map", default=None,
                   help="JSON object mapping raw response labels to 1..m")
    p.add_argument("--categories", type=int, default=None,
                   help="number of categories m (default: largest label)")
    p.add_argument("--standardize", action="store_true",
                   help="centre covariates at the median and scale by 1.4828*MAD")
    p.add_argument("--trim-quantile", type=float, default=None,
                   help="drop rows whose robust distance exceeds this chi-square quantile")


def _fit_flags(p):
    p.add_argument("--link", choices=LINK_NAMES, default="probit")
    p.add_argument("--estimator", choices=("mdpde", "mle", "croux_wml", "iannario"), default="mdpde")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--c", type=float, default=None, help="Iannario tuning constant")
    p.add_argument("--weight", choices=("w1", "w2", "w3"), default=None, help="Iannario weight")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--grad-tol", type=float, default=1e-8)
    p.add_argument("--zero-mad", choices=("raise", "fallback"), default="raise",
                   help="treatment of zero-MAD covariates in robust distances")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ordinal-dpd",
                                 description="Robust ordinal regression by density power divergence.")
    ap.add_argument("--config", default=None, help="JSON file whose keys override the flags")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one estimator")
    _data_flags(p)
    _fit_flags(p)
    p.add_argument("--split", type=float, default=None,
                   help="training fraction; accuracy is reported on the remainder")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="choose alpha by the Warwick-Jones criterion")
    _data_flags(p)
    _fit_flags(p)
    p.add_argument("--pilot-alpha", type=float, default=0.5)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("predict", help="argmax predictions from a fitted model")
    p.add_argument("--model", required=True, help="JSON written by the fit subcommand")
    p.add_argument("--data", required=True)
    p.add_argument("--response", default=None)
    p.add_argument("--delimiter", default=None)
    p.add_argument("--link", choices=LINK_NAMES, default="probit")
    p.add_argument("--standardize", action="store_true",
                   help="apply the standardization stored in the model file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="ignored; the scenario carries its seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ges", help="gross error sensitivity over an alpha grid")
    p.add_argument("--model-id", type=int, default=1)
    p.add_argument("--link", choices=LINK_NAMES, default="probit")
    p.add_argument("--n", type=int, default=40, help="design size (Model 1 uses its four states)")
    p.add_argument("--mode", choices=("per_observation", "joint_exact", "joint_heuristic"),
                   default="joint_heuristic")
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ges)

    p = sub.add_parser("implode", help="implosion experiment on the regenerated base sample")
    p.add_argument("--s", type=float, nargs="+", default=[8.0])
    p.add_argument("--alphas", type=float, nargs="+", default=[0, 0.1, 0.2, 0.3, 0.5, 0.75, 1])
    p.add_argument("--max-outliers", type=int, default=50)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_implode)

    p = sub.add_parser("residuals", help="generalized residual curves A_j(t) and B_j(t)")
    p.add_argument("--gamma", type=float, nargs="+", required=True)
    p.add_argument("--link", choices=LINK_NAMES, default="probit")
    p.add_argument("--category", type=int, required=True)
    p.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    p.add_argument("--t-min", type=float, default=-10.0)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_residuals)
    return ap


def parse(argv=None) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                over = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
        for key, val in over.items():
            key = key.replace("-", "_")
            if not hasattr(args, key) or key in ("func", "command"):
                raise DataError(f"unknown config key {key!r} for {args.command}")
            setattr(args, key, val)
    if getattr(args, "split", None) is not None and not 0.0 < args.split < 1.0:
        raise DataError("--split must lie in (0, 1)")
    parent = Path(args.out).resolve().parent
    if not parent.is_dir():
        raise DataError(f"output directory does not exist: {parent}")
    for key in ("data", "scenario", "model", "label_map"):
        path = getattr(args, key, None)
        if path and not Path(path).is_file():
            raise DataError(f"{key.replace('_', '-')} file not found: {path}")
    return args


def main(argv=None) -> int:
    try:
        args = parse(argv)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    resolved = _resolved(args)
    status = EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            status = args.func(args)
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_CONVERGENCE
    except (DataError, InvalidData, InvalidTheta, ZeroMadColumn, OrdinalDPDError,
            OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_DATA
    try:
        write_metadata(args, resolved, status)
    except OSError as exc:
        print(f"warning: could not write run metadata: {exc}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
