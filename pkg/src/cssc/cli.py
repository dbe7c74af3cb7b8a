"""Command-line interface: ``cssc {simulate,cluster,trials,grid,validate-theorem}``.

Settings are resolved as CLI flags > ``--config`` JSON > built-in defaults.
Seeds: trial ``t`` uses ``seed + t`` both for sampling side-information and
for the k-means stage; k-means restarts derive their own streams from that
seed, and grid cells reuse the seed list given by ``--seeds``.
"""
import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (ConstraintSet, generate_union_of_subspaces, load_constraints, load_labels,
                      load_matrix, normalize_columns, sample_side_information, save_constraints,
                      save_labels)
from .metrics import evaluate, simulate_rie_deviation
from .modelselect import DEFAULT_ALPHA, DEFAULT_LAMBDA0, GRID_METHODS, GridSpec, export_surface, grid_search
from .pipelines import CONSTRAINED_METHODS, METHODS, ClusterOptions, run_method
from .selfexpress import SolverOptions, lambda_from_lambda0

logger = logging.getLogger("cssc")

DEFAULTS = {
    "data": None,
    "synthetic": None,
    "orientation": "rows-are-features",
    "normalize": True,
    "labels": None,
    "constraints": None,
    "p": None,
    "seed": 0,
    "method": None,
    "methods": None,
    "n": None,
    "lambda": None,
    "lambda0": None,
    "alpha": 0.1,
    "rho": 10.0,
    "max_iter": 2000,
    "tol_abs": 1e-6,
    "tol_rel": 1e-4,
    "error_norm": "frobenius",
    "t_max": 10,
    "n_init": 20,
    "trials": None,
    "N": None,
    "metric": None,
    "save_coefficients": False,
    "lambda0_grid": None,
    "alpha_grid": None,
    "seeds": None,
    "jobs": 1,
    "out": None,
}
DEFAULT_LAMBDA0_SPARSE = 5.0
DEFAULT_LAMBDA_LSR = 1.0


class UsageError(Exception):
    pass


def _write_atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _dump_json(path: Path, obj):
    _write_atomic(path, json.dumps(_finite(obj), indent=2, default=_json_default, allow_nan=False) + "\n")


def _finite(obj):
    # NaN/inf are not valid JSON; report them as null
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def resolve_config(args) -> dict:
    """Merge defaults, the JSON config file and explicitly given flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("command", "config", "func", "verbose"):
            continue
        if value is not None:
            cfg[key] = value
    return cfg


def _load_data(cfg):
    if cfg["data"] and cfg["synthetic"]:
        raise UsageError("give either --data or --synthetic, not both")
    truth = None
    if cfg["data"]:
        X = load_matrix(cfg["data"], cfg["orientation"]).values
    elif cfg["synthetic"]:
        syn = cfg["synthetic"]
        if isinstance(syn, str):
            parts = [float(v) for v in syn.split(",")]
            if len(parts) not in (4, 5):
                raise UsageError("--synthetic expects D,n,d,m[,noise]")
            syn = dict(zip(("D", "n", "d", "m", "noise"), parts))
        X, truth = generate_union_of_subspaces(
            int(syn["D"]), int(syn["n"]), int(syn["d"]), int(syn["m"]),
            float(syn.get("noise", 0.0)), int(syn.get("seed", cfg["seed"])),
        )
        if cfg["n"] is None:
            cfg["n"] = int(syn["n"])
    else:
        raise UsageError("no input: give --data or --synthetic")
    if cfg["normalize"]:
        X = normalize_columns(X)
    if cfg["labels"]:
        truth = load_labels(cfg["labels"])
        if truth.shape[0] != X.shape[1]:
            raise UsageError(f"labels file has {truth.shape[0]} entries, data has {X.shape[1]} samples")
    if cfg["n"] is None:
        if truth is None:
            raise UsageError("number of clusters unknown: give --n or --labels")
        cfg["n"] = int(len(np.unique(truth)))
    if int(cfg["n"]) < 1:
        raise UsageError("--n must be >= 1")
    return X, truth


def _solver_options(cfg, X, method):
    if cfg["lambda"] is not None and cfg["lambda0"] is not None:
        raise UsageError("--lambda and --lambda0 are mutually exclusive")
    if cfg["lambda"] is not None:
        lam = float(cfg["lambda"])
    elif cfg["lambda0"] is not None:
        lam = lambda_from_lambda0(X, float(cfg["lambda0"]))
    elif method.startswith("lsr"):
        lam = DEFAULT_LAMBDA_LSR
    else:
        lam = lambda_from_lambda0(X, DEFAULT_LAMBDA0_SPARSE)
    return SolverOptions(lam=lam, rho=float(cfg["rho"]), max_iter=int(cfg["max_iter"]),
                         tol_abs=float(cfg["tol_abs"]), tol_rel=float(cfg["tol_rel"]),
                         error_norm=cfg["error_norm"])


def _constraints(cfg, truth, N, seed, required):
    if cfg["constraints"] and cfg["p"] is not None:
        raise UsageError("give either --constraints or --p, not both")
    if cfg["constraints"]:
        return load_constraints(cfg["constraints"], N), None
    if cfg["p"] is not None:
        if truth is None:
            raise UsageError("sampling side-information with --p needs ground-truth --labels")
        p = float(cfg["p"])
        return sample_side_information(truth, p, seed), p
    if required:
        raise UsageError("constrained methods need --constraints or --p")
    return None, None


def _out_dir(cfg) -> Path:
    if not cfg["out"]:
        raise UsageError("--out directory is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg):
    out = _out_dir(cfg)
    syn = cfg["synthetic"] or "30,3,3,20,0.0"
    cfg = dict(cfg, synthetic=syn, data=None, labels=None, normalize=False)
    X, truth = _load_data(cfg)
    np.savetxt(out / "data.csv", X, delimiter=",", fmt="%.17g")
    save_labels(out / "labels.txt", truth)
    written = ["data.csv", "labels.txt"]
    if cfg["p"] is not None:
        save_constraints(out / "constraints.txt", sample_side_information(truth, float(cfg["p"]), cfg["seed"]))
        written.append("constraints.txt")
    _dump_json(out / "run.json", {"command": "simulate", "config": cfg, "files": written})
    print(f"wrote {', '.join(written)} to {out}")
    return 0


def cmd_cluster(cfg):
    method = cfg["method"] or "ssc"
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    cfg = dict(cfg, method=method)
    out = _out_dir(cfg)
    X, truth = _load_data(cfg)
    if cfg["metric"] in ("err", "ri") and truth is None:
        raise UsageError(f"metric {cfg['metric']!r} needs ground-truth --labels")
    N = X.shape[1]
    seed = int(cfg["seed"])
    cs, p = _constraints(cfg, truth, N, seed, method in CONSTRAINED_METHODS)
    if cfg["metric"] == "rie" and cs is None:
        raise UsageError("metric 'rie' needs --constraints or --p")
    opts = _solver_options(cfg, X, method)
    copts = ClusterOptions(seed=seed, n_init=int(cfg["n_init"]))
    result = run_method(method, X, int(cfg["n"]), cs, opts=opts, copts=copts,
                        alpha=float(cfg["alpha"]), t_max=int(cfg["t_max"]))
    report = evaluate(result.labels, truth, cs, p)

    save_labels(out / "labels.csv", result.labels)
    _dump_json(out / "metrics.json", report.to_dict())
    if cfg["save_coefficients"]:
        buf = io.StringIO()
        np.savetxt(buf, result.coefficients, delimiter=",", fmt="%.10g")
        _write_atomic(out / "coefficients.csv", buf.getvalue())
    meta = {"command": "cluster", "config": cfg, "lambda": opts.lam, "rho": opts.rho, **result.metadata()}
    _dump_json(out / "run.json", meta)
    line = f"{method}: {N} points -> {len(np.unique(result.labels))} clusters"
    if report.err is not None:
        line += f", ERR={report.err:.4f}"
    if report.rie is not None:
        line += f", RIE={report.rie:.4f}"
    print(line)
    return 0


def cmd_trials(cfg):
    out = _out_dir(cfg)
    X, truth = _load_data(cfg)
    if truth is None:
        raise UsageError("trials report ERR and need ground-truth --labels (or --synthetic)")
    if cfg["p"] is None:
        raise UsageError("trials resample side-information: give --p")
    if cfg["constraints"]:
        raise UsageError("trials sample constraints themselves; drop --constraints")
    trials = int(cfg["trials"] or 20)
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    methods = cfg["methods"] or [cfg["method"] or "ssc"]
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    cfg = dict(cfg, methods=methods, trials=trials)
    base = int(cfg["seed"])
    p = float(cfg["p"])
    detail = []
    summary = []
    for m in methods:
        opts = _solver_options(cfg, X, m)
        errs, failures = [], []
        for t in range(trials):
            cs = sample_side_information(truth, p, base + t)
            copts = ClusterOptions(seed=base + t, n_init=int(cfg["n_init"]))
            try:
                res = run_method(m, X, int(cfg["n"]), cs, opts=opts, copts=copts,
                                 alpha=float(cfg["alpha"]), t_max=int(cfg["t_max"]))
            except Exception as exc:
                failures.append(f"trial {t}: {exc}")
                detail.append({"method": m, "trial": t, "seed": base + t, "err": "", "rie": "", "error": str(exc)})
                continue
            report = evaluate(res.labels, truth, cs if len(cs) else None, p)
            errs.append(report.err)
            detail.append({"method": m, "trial": t, "seed": base + t, "err": report.err,
                           "rie": "" if report.rie is None else report.rie, "error": ""})
        summary.append({
            "method": m,
            "mean_err": float(np.mean(errs)) if errs else math.nan,
            "std_err": float(np.std(errs)) if errs else math.nan,
            "trials": len(errs),
            "failures": len(failures),
        })
        for msg in failures:
            print(f"{m}: {msg}", file=sys.stderr)

    _write_atomic(out / "trials.csv", _to_csv(summary, ("method", "mean_err", "std_err", "trials", "failures")))
    _write_atomic(out / "trials_detail.csv", _to_csv(detail, ("method", "trial", "seed", "err", "rie", "error")))
    _dump_json(out / "run.json", {"command": "trials", "config": cfg})
    for row in summary:
        print(f"{row['method']:>10s}  ERR {100 * row['mean_err']:.2f} +- {100 * row['std_err']:.2f} %"
              f"  ({row['trials']} trials, {row['failures']} failed)")
    return 0


def _to_csv(rows, fields):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def cmd_grid(cfg):
    method = cfg["method"] or "cs3c"
    if method not in GRID_METHODS:
        raise UsageError(
            f"grid search ranks cells by the Rand index estimator, which needs constraints; "
            f"method {method!r} does not use them (choose from {', '.join(GRID_METHODS)})"
        )
    if cfg["lambda"] is not None:
        raise UsageError("grid search sweeps lambda0; drop --lambda")
    out = _out_dir(cfg)
    X, truth = _load_data(cfg)
    cs, p = _constraints(cfg, truth, X.shape[1], int(cfg["seed"]), True)
    if len(cs) == 0:
        raise UsageError("no constraints: the Rand index estimator is undefined")
    lambda0s = cfg["lambda0_grid"] or list(DEFAULT_LAMBDA0)
    alphas = cfg["alpha_grid"] or list(DEFAULT_ALPHA)
    seeds = cfg["seeds"] or [int(cfg["seed"])]
    spec = GridSpec(tuple(lambda0s), tuple(alphas), method, tuple(seeds))
    base = _solver_options(dict(cfg, lambda0=None), X, "cssc")
    result = grid_search(X, int(cfg["n"]), cs, spec, truth=truth, base_opts=base,
                         t_max=int(cfg["t_max"]), n_init=int(cfg["n_init"]), n_jobs=int(cfg["jobs"]))
    export_surface(result.surface, out / "surface.csv")
    summary = result.summary()
    if truth is not None:
        summary["rie_err_spearman"] = result.surface.rie_err_correlation()
    summary["failures"] = [
        {"lambda0": c.lambda0, "alpha": c.alpha, "error": c.error} for c in result.surface.cells if not c.ok
    ]
    _dump_json(out / "selected.json", summary)
    _dump_json(out / "run.json", {"command": "grid", "config": dict(cfg, method=method)})
    print(f"selected lambda0={result.best_lambda0:g} alpha={result.best_alpha:g} "
          f"(mean RIE {summary['mean_rie']:.4f})")
    return 0


def cmd_validate_theorem(cfg):
    N = int(cfg["N"] or 60)
    p = float(cfg["p"] if cfg["p"] is not None else 0.3)
    if p * N * (N - 1) <= 1:
        raise UsageError(
            f"the bound 2/(pN(N-1)-1) is only defined for pN(N-1) > 1; got p={p}, N={N} "
            f"(pN(N-1)={p * N * (N - 1):g})"
        )
    cfg = dict(cfg, N=N, p=p, trials=int(cfg["trials"] or 1000))
    check = simulate_rie_deviation(N, p, cfg["trials"], int(cfg["seed"]))
    if cfg["out"]:
        out = _out_dir(cfg)
        _dump_json(out / "run.json", {"command": "validate-theorem", "config": cfg})
        _write_atomic(out / "deviation_trials.csv",
                      _to_csv(check.rows, ("trial", "mu", "mu_hat", "deviation", "bound")))
        _dump_json(out / "deviation.json", {
            "N": N, "p": p, "trials": len(check.rows), "bound": check.bound,
            "max_deviation": check.max_deviation, "violation_rate": check.violation_rate,
        })
    print(f"bound 2/(pN(N-1)-1) = {check.bound:.6g}")
    print(f"max |mu_hat - mu|    = {check.max_deviation:.6g}")
    print(f"violation rate       = {check.violation_rate:.4f} ({len(check.rows)} trials)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cssc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="JSON file with default settings")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        if not data:
            return
        p.add_argument("--data", help="CSV/TSV matrix")
        p.add_argument("--synthetic", help="generate data instead: D,n,d,m[,noise]")
        p.add_argument("--orientation", choices=("rows-are-features", "rows-are-samples"))
        p.add_argument("--no-normalize", dest="normalize", action="store_false", default=None)
        p.add_argument("--labels", help="ground-truth labels, one 1-based id per line")
        p.add_argument("--constraints", help="constraints file: 'i j ML|CL' per line, 0-based")
        p.add_argument("--p", type=float, help="sample this proportion of pairs as side-information")
        p.add_argument("--n", type=int, help="number of clusters")
        p.add_argument("--lambda", type=float, dest="lambda")
        p.add_argument("--lambda0", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--tol-abs", type=float, dest="tol_abs")
        p.add_argument("--tol-rel", type=float, dest="tol_rel")
        p.add_argument("--error-norm", choices=("frobenius", "l1"), dest="error_norm")
        p.add_argument("--t-max", type=int, dest="t_max")
        p.add_argument("--n-init", type=int, dest="n_init")

    p = sub.add_parser("simulate", help="write a synthetic union-of-subspaces data set")
    common(p, data=False)
    p.add_argument("--synthetic", help="D,n,d,m[,noise] (default 30,3,3,20,0)")
    p.add_argument("--p", type=float, help="also sample this proportion of constraints")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cluster", help="run one clustering method")
    common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--metric", choices=("err", "ri", "rie"), help="require the inputs for this metric")
    p.add_argument("--save-coefficients", action="store_true", default=None, dest="save_coefficients")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("trials", help="mean +- std ERR over resampled side-information")
    common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--trials", type=int, help="number of trials (default 20)")
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("grid", help="select (lambda0, alpha) by peak Rand index estimator")
    common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--lambda0-grid", type=_float_list, dest="lambda0_grid")
    p.add_argument("--alpha-grid", type=_float_list, dest="alpha_grid")
    p.add_argument("--seeds", type=_int_list, help="comma-separated k-means seeds averaged per cell")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("validate-theorem", help="Monte-Carlo check of the estimator deviation bound")
    common(p, data=False)
    p.add_argument("--N", type=int, dest="N", help="population size (default 60)")
    p.add_argument("--p", type=float)
    p.add_argument("--trials", type=int, help="Monte-Carlo trials (default 1000)")
    p.set_defaults(func=cmd_validate_theorem)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(cfg)
    except (UsageError, ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
