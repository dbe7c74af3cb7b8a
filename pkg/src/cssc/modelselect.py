"""Parameter selection by maximizing the Rand index estimator over a (lambda0, alpha) grid."""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .dataset import ConstraintSet
from .metrics import clustering_error, rand_index_estimator
from .pipelines import ClusterOptions, run_cs3c, run_cs3c_plus, run_cssc, run_cssc_plus
from .selfexpress import SolverOptions, lambda_from_lambda0

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA0 = (2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
DEFAULT_ALPHA = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.5, 2.0)
GRID_METHODS = ("cssc", "cssc_plus", "cs3c", "cs3c_plus")
SURFACE_FIELDS = ("method", "lambda0", "alpha", "seed", "rie", "err")


@dataclass(frozen=True)
class GridSpec:
    lambda0_values: Sequence[float] = DEFAULT_LAMBDA0
    alpha_values: Sequence[float] = DEFAULT_ALPHA
    method: str = "cs3c"
    seeds: Sequence[int] = (0,)

    def __post_init__(self):
        if not self.lambda0_values or not self.alpha_values or not self.seeds:
            raise ValueError("grid value lists must be nonempty")
        if self.method not in GRID_METHODS:
            raise ValueError(f"grid search supports {GRID_METHODS}, got {self.method!r}")
        if any(v <= 0 for v in self.lambda0_values):
            raise ValueError("lambda0 values must be positive")
        if any(a < 0 for a in self.alpha_values):
            raise ValueError("alpha values must be nonnegative")

    @property
    def uses_alpha(self) -> bool:
        return self.method in ("cs3c", "cs3c_plus")


@dataclass
class GridCell:
    method: str
    lambda0: float
    alpha: float
    seeds: list = field(default_factory=list)
    rie: list = field(default_factory=list)
    err: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and len(self.rie) > 0

    @property
    def mean_rie(self) -> float:
        return float(np.mean(self.rie)) if self.ok else math.nan

    @property
    def mean_err(self) -> float:
        vals = [e for e in self.err if e is not None]
        return float(np.mean(vals)) if self.ok and vals else math.nan

    @property
    def std_err(self) -> float:
        vals = [e for e in self.err if e is not None]
        return float(np.std(vals)) if self.ok and vals else math.nan


@dataclass
class GridSurface:
    cells: list = field(default_factory=list)

    def valid(self):
        return [c for c in self.cells if c.ok]

    def best(self) -> GridCell:
        """Cell of maximal mean RIE; ties go to the smaller alpha, then the smaller lambda0."""
        valid = self.valid()
        if not valid:
            raise RuntimeError("every grid cell failed")
        return min(valid, key=lambda c: (-round(c.mean_rie, 12), c.alpha, c.lambda0))

    def rie_err_correlation(self) -> float:
        """Spearman correlation between mean RIE and mean accuracy (1 - ERR) across valid cells."""
        cells = [c for c in self.valid() if not math.isnan(c.mean_err)]
        rie = [c.mean_rie for c in cells]
        acc = [1.0 - c.mean_err for c in cells]
        # a constant side makes the rank correlation undefined
        if len(cells) < 2 or len(set(rie)) < 2 or len(set(acc)) < 2:
            return math.nan
        rho = spearmanr(rie, acc).statistic
        return float(rho)


@dataclass
class GridResult:
    best_lambda0: float
    best_alpha: float
    surface: GridSurface

    def summary(self) -> dict:
        best = self.surface.best()
        return {
            "method": best.method,
            "lambda0": self.best_lambda0,
            "alpha": self.best_alpha,
            "mean_rie": best.mean_rie,
            "mean_err": None if math.isnan(best.mean_err) else best.mean_err,
            "cells": len(self.surface.cells),
            "failed_cells": sum(not c.ok for c in self.surface.cells),
        }


def _run_lambda0(X, n_clusters, cs, truth, method, lambda0, alphas, seeds, base_opts, t_max, n_init):
    """All cells sharing one lambda0; the alpha-independent first pass is computed once per seed."""
    cells = [GridCell(method, float(lambda0), float(a)) for a in alphas]
    try:
        opts = base_opts.with_lambda(lambda_from_lambda0(X, lambda0))
    except Exception as exc:
        for cell in cells:
            cell.error = f"{type(exc).__name__}: {exc}"
        return cells
    plus = method.endswith("_plus")
    for seed in seeds:
        copts = ClusterOptions(seed=seed, n_init=n_init)
        try:
            first = (run_cssc_plus if plus else run_cssc)(X, n_clusters, cs, opts, copts)
        except Exception as exc:
            _fail(cells, lambda0, exc)
            continue
        for cell, alpha in zip(cells, alphas):
            if cell.error is not None:
                continue
            try:
                if method in ("cssc", "cssc_plus"):
                    res = first
                else:
                    run = run_cs3c_plus if plus else run_cs3c
                    res = run(X, n_clusters, cs, alpha, opts, copts, t_max, initial=first)
            except Exception as exc:
                _fail([cell], lambda0, exc)
                continue
            cell.seeds.append(int(seed))
            cell.rie.append(rand_index_estimator(res.labels, cs))
            cell.err.append(None if truth is None else clustering_error(res.labels, truth))
    return cells


def _fail(cells, lambda0, exc):
    # a failing cell is recorded and skipped, never aborts the sweep
    for cell in cells:
        logger.warning("grid cell lambda0=%g alpha=%g failed: %s", lambda0, cell.alpha, exc)
        cell.error = f"{type(exc).__name__}: {exc}"


def grid_search(X, n_clusters: int, cs: ConstraintSet, spec: GridSpec = GridSpec(), truth=None,
                base_opts: SolverOptions = SolverOptions(), t_max: int = 10, n_init: int = 20,
                n_jobs: int = 1) -> GridResult:
    """Run ``spec.method`` at every grid point and pick the cell of peak mean RIE.

    Methods without a structured-norm term ignore alpha; their cells repeat
    one result along the alpha axis so every method yields the full grid.
    When ``truth`` is given ERR is recorded alongside RIE (it never
    influences the selection).
    """
    if len(cs) == 0:
        raise ValueError("grid search needs constraints: the Rand index estimator is undefined without them")
    X = np.asarray(X, dtype=np.float64)
    alphas = list(spec.alpha_values)
    seeds = list(spec.seeds)

    def work(l0):
        return _run_lambda0(X, n_clusters, cs, truth, spec.method, l0, alphas, seeds, base_opts, t_max, n_init)

    if n_jobs == 1:
        groups = [work(l0) for l0 in spec.lambda0_values]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            groups = list(pool.map(work, spec.lambda0_values))
    surface = GridSurface([cell for group in groups for cell in group])
    best = surface.best()
    return GridResult(best.lambda0, best.alpha, surface)


def export_surface(surface: GridSurface, path):
    """Write one long-format CSV row per (cell, seed); failed cells are omitted."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SURFACE_FIELDS)
        for cell in surface.valid():
            for seed, rie, err in zip(cell.seeds, cell.rie, cell.err):
                writer.writerow([cell.method, repr(float(cell.lambda0)), repr(float(cell.alpha)), seed,
                                 repr(float(rie)), "" if err is None else repr(float(err))])
    tmp.replace(path)


def read_surface(path) -> GridSurface:
    cells = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["method"], float(row["lambda0"]), float(row["alpha"]))
            cell = cells.setdefault(key, GridCell(*key))
            cell.seeds.append(int(row["seed"]))
            cell.rie.append(float(row["rie"]))
            cell.err.append(float(row["err"]) if row["err"] else None)
    return GridSurface(list(cells.values()))
