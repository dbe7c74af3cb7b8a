"""Clustering error, Rand index and its estimate from pairwise side-information."""
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import ConstraintSet


def _check_pair(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"label vectors differ in length: {pred.shape[0]} vs {truth.shape[0]}")
    return pred, truth


def structure_matrix(labels) -> np.ndarray:
    """Binary matrix with 0 where two points share a cluster (and on the diagonal), 1 elsewhere."""
    labels = np.asarray(labels)
    theta = (labels[:, None] != labels[None, :]).astype(np.int64)
    return theta


def confusion_matrix(pred, truth) -> np.ndarray:
    """Square contingency table, zero-padded when the cluster counts differ."""
    pred, truth = _check_pair(pred, truth)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    k = max(p.max(initial=-1), t.max(initial=-1)) + 1
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def clustering_error(pred, truth) -> float:
    """Fraction of misassigned points under the best cluster matching (Hungarian)."""
    pred, truth = _check_pair(pred, truth)
    if pred.size == 0:
        return 0.0
    table = confusion_matrix(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(1.0 - table[rows, cols].sum() / pred.size)


def rand_index(pred, truth) -> float:
    """Fraction of ordered off-diagonal pairs on which two partitions agree."""
    pred, truth = _check_pair(pred, truth)
    N = pred.shape[0]
    if N < 2:
        raise ValueError("Rand index needs at least two points")
    disagree = np.abs(structure_matrix(pred) - structure_matrix(truth)).sum()
    total = N * N - N
    return float((total - disagree) / total)


def rand_index_estimator(pred, cs: ConstraintSet) -> float:
    """Rand index restricted to the constrained entries.

    Each unordered constraint contributes its two mirrored ordered entries,
    which carry the same value, so this equals the plain per-pair average.
    """
    if len(cs) == 0:
        raise ValueError("Rand index estimator is undefined without constraints")
    pred = np.asarray(pred)
    if pred.shape[0] != cs.n_samples:
        raise ValueError(f"labels cover {pred.shape[0]} points, constraints {cs.n_samples}")
    theta = (pred[cs.pairs[:, 0]] != pred[cs.pairs[:, 1]]).astype(np.int64)
    wrong = 2 * int(np.abs(theta - cs.target).sum())
    return float((cs.n_entries - wrong) / cs.n_entries)


def rie_deviation_bound(p: float, N: int) -> float:
    """``2 / (p N (N-1) - 1)``: the claimed deviation bound between estimator and Rand index."""
    denom = p * N * (N - 1) - 1.0
    if not denom > 0:
        raise ValueError(f"bound needs p*N*(N-1) > 1, got p={p}, N={N} (p*N*(N-1)={p * N * (N - 1):g})")
    return 2.0 / denom


def hoeffding_deviation_bound(p: float, N: int, delta: float = 0.05) -> float:
    """Deviation of the estimator from the Rand index holding with probability >= 1 - delta.

    Counts the ``K = N(N-1)/2`` independently sampled unordered pairs; with
    ``eps = sqrt(log(4/delta) / (2K))`` Hoeffding on both the hit count and the
    sample count gives ``|mu_hat - mu| <= 2 eps / (p - eps)``.
    """
    K = N * (N - 1) / 2
    eps = math.sqrt(math.log(4.0 / delta) / (2.0 * K))
    if not eps < p:
        raise ValueError(f"p={p} too small for N={N} at delta={delta}")
    return 2.0 * eps / (p - eps)


@dataclass
class MetricsReport:
    err: Optional[float] = None
    rand_index: Optional[float] = None
    rie: Optional[float] = None
    bound: Optional[float] = None
    n_constraints: int = 0

    def to_dict(self):
        return asdict(self)


def evaluate(pred, truth=None, cs: Optional[ConstraintSet] = None, p: Optional[float] = None) -> MetricsReport:
    """Collect whichever metrics the available information allows."""
    report = MetricsReport()
    if truth is not None:
        report.err = clustering_error(pred, truth)
        report.rand_index = rand_index(pred, truth)
    if cs is not None and len(cs):
        report.rie = rand_index_estimator(pred, cs)
        report.n_constraints = len(cs)
        N = cs.n_samples
        frac = p if p is not None else cs.n_entries / (N * (N - 1))
        if frac * N * (N - 1) > 1:
            report.bound = rie_deviation_bound(frac, N)
    return report


@dataclass
class DeviationCheck:
    """Monte-Carlo comparison of ``|mu_hat - mu|`` against the deviation bound."""

    N: int
    p: float
    bound: float
    rows: list = field(default_factory=list)

    @property
    def deviations(self) -> np.ndarray:
        return np.array([r["deviation"] for r in self.rows if not math.isnan(r["deviation"])])

    @property
    def violation_rate(self) -> float:
        dev = self.deviations
        return float(np.mean(dev >= self.bound)) if dev.size else 0.0

    @property
    def max_deviation(self) -> float:
        dev = self.deviations
        return float(dev.max()) if dev.size else 0.0


def simulate_rie_deviation(N: int, p: float, trials: int = 1000, seed: int = 0, n_clusters: int = 4) -> DeviationCheck:
    """Sample random partitions and random constraint sets; record ``|mu_hat - mu|``.

    Constraints follow the Bernoulli model: each unordered pair is observed
    independently with probability ``p`` and contributes both ordered entries.
    A trial that observes no pair has an undefined estimate and is recorded as NaN.
    """
    bound = rie_deviation_bound(p, N)
    check = DeviationCheck(N, p, bound)
    rows_idx, cols_idx = np.triu_indices(N, 1)
    for t, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        rng = np.random.default_rng(child)
        truth = rng.integers(0, n_clusters, N)
        pred = rng.integers(0, n_clusters, N)
        mu = rand_index(pred, truth)
        keep = rng.random(rows_idx.size) < p
        if not np.any(keep):
            mu_hat = float("nan")
        else:
            pairs = np.column_stack([rows_idx[keep], cols_idx[keep]])
            cs = ConstraintSet(pairs, truth[pairs[:, 0]] == truth[pairs[:, 1]], N)
            mu_hat = rand_index_estimator(pred, cs)
        check.rows.append(
            {"trial": t, "mu": mu, "mu_hat": mu_hat, "deviation": abs(mu_hat - mu), "bound": bound}
        )
    return check
