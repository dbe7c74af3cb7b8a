"""End-to-end clustering: SSC, CSSC, CS3C and their constrained-quantization "+" variants.

Every pipeline is: self-expressive coefficients -> affinity -> spectral
embedding -> k-means. The "+" variants replace the final k-means by
constrained k-means so the returned labels satisfy all given constraints.
The CS3C variants alternate between the coefficient and segmentation steps,
feeding the current segmentation back as structured l1 weights.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import ConstraintSet, build_weight_matrix
from .selfexpress import (SolverOptions, combine_structured_weights, solve_lsr,
                          solve_weighted_sparse, weighted_objective)
from .spectral import affinity_from_coefficients, constrained_kmeans, kmeans, spectral_embedding

logger = logging.getLogger(__name__)

METHODS = (
    "ssc", "ssc_plus", "cssc", "cssc_plus", "s3c", "cs3c", "cs3c_plus",
    "lsr1", "lsr2", "lsr1_plus", "lsr2_plus",
)
CONSTRAINED_METHODS = ("ssc_plus", "cssc", "cssc_plus", "cs3c", "cs3c_plus", "lsr1_plus", "lsr2_plus")
ALTERNATING_METHODS = ("s3c", "cs3c", "cs3c_plus")


@dataclass(frozen=True)
class ClusterOptions:
    """Settings of the spectral stage shared by all pipelines."""

    seed: int = 0
    n_init: int = 20
    max_iter: int = 300
    regularize_degree: bool = False


@dataclass
class ClusteringResult:
    labels: np.ndarray
    coefficients: np.ndarray
    converged: bool = True
    iterations: int = 1
    objective_trace: list = field(default_factory=list)
    method: str = ""

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "objective_trace": [float(v) for v in self.objective_trace],
        }


def spectral_stage(C, n_clusters: int, cs: Optional[ConstraintSet] = None,
                   copts: ClusterOptions = ClusterOptions()) -> np.ndarray:
    """Labels from a coefficient matrix; constrained k-means when ``cs`` is given."""
    E = spectral_embedding(affinity_from_coefficients(C), n_clusters, regularize=copts.regularize_degree)
    if cs is None:
        return kmeans(E, n_clusters, copts.seed, copts.n_init, copts.max_iter)
    return constrained_kmeans(E, n_clusters, cs, copts.seed, copts.n_init, copts.max_iter)


def _sparse_pipeline(X, n_clusters, W, cs_quantize, opts, copts, method):
    sol = solve_weighted_sparse(X, W, opts)
    labels = spectral_stage(sol.C, n_clusters, cs_quantize, copts)
    return ClusteringResult(labels, sol.C, sol.converged, 1, [sol.objective], method)


def run_ssc(X, n_clusters: int, opts: SolverOptions = SolverOptions(),
            copts: ClusterOptions = ClusterOptions()) -> ClusteringResult:
    """Sparse subspace clustering: unit weights, plain k-means."""
    N = np.shape(X)[1]
    return _sparse_pipeline(X, n_clusters, np.ones((N, N)), None, opts, copts, "ssc")


def run_ssc_plus(X, n_clusters: int, cs: ConstraintSet, opts: SolverOptions = SolverOptions(),
                 copts: ClusterOptions = ClusterOptions()) -> ClusteringResult:
    """Unit weights, constraints used only in the quantization step."""
    N = np.shape(X)[1]
    return _sparse_pipeline(X, n_clusters, np.ones((N, N)), cs, opts, copts, "ssc_plus")


def run_cssc(X, n_clusters: int, cs: ConstraintSet, opts: SolverOptions = SolverOptions(),
             copts: ClusterOptions = ClusterOptions()) -> ClusteringResult:
    """Constraint-weighted sparse coding followed by plain k-means."""
    return _sparse_pipeline(X, n_clusters, build_weight_matrix(cs), None, opts, copts, "cssc")


def run_cssc_plus(X, n_clusters: int, cs: ConstraintSet, opts: SolverOptions = SolverOptions(),
                  copts: ClusterOptions = ClusterOptions()) -> ClusteringResult:
    """Constraint-weighted sparse coding followed by constrained k-means."""
    return _sparse_pipeline(X, n_clusters, build_weight_matrix(cs), cs, opts, copts, "cssc_plus")


def _alternate(X, n_clusters, cs, alpha, opts, copts, t_max, constrained, method, initial=None):
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    psi = build_weight_matrix(cs)
    cs_q = cs if constrained else None
    if initial is None:
        initial = _sparse_pipeline(X, n_clusters, psi, cs_q, opts, copts, method)
    labels = initial.labels
    C = initial.coefficients
    all_converged = initial.converged
    trace = []
    t = 0
    fixed = False
    for t in range(1, t_max + 1):
        W = combine_structured_weights(psi, labels, alpha)
        sol = solve_weighted_sparse(X, W, opts)
        C = sol.C
        all_converged &= sol.converged
        trace.append(weighted_objective(X, C, W, opts.lam, opts.error_norm))
        new = spectral_stage(C, n_clusters, cs_q, copts)
        logger.debug("%s outer iteration %d: objective %.6g", method, t, trace[-1])
        if np.array_equal(new, labels):
            fixed = True
            break
        labels = new
    return ClusteringResult(labels, C, all_converged and fixed, t, trace, method)


def run_cs3c(X, n_clusters: int, cs: ConstraintSet, alpha: float = 0.1,
             opts: SolverOptions = SolverOptions(), copts: ClusterOptions = ClusterOptions(),
             t_max: int = 10, initial: Optional[ClusteringResult] = None) -> ClusteringResult:
    """Alternate weighted sparse coding (weights ``psi + alpha * theta(Q)``) and plain k-means.

    Starts from a CSSC pass (or ``initial`` if given) and stops once the
    segmentation repeats or after ``t_max`` outer iterations. ``converged`` is
    True only if the segmentation fixed and every inner solve converged.
    """
    return _alternate(X, n_clusters, cs, alpha, opts, copts, t_max, False, "cs3c", initial)


def run_cs3c_plus(X, n_clusters: int, cs: ConstraintSet, alpha: float = 0.1,
                  opts: SolverOptions = SolverOptions(), copts: ClusterOptions = ClusterOptions(),
                  t_max: int = 10, initial: Optional[ClusteringResult] = None) -> ClusteringResult:
    """As :func:`run_cs3c` with constrained k-means in every segmentation step."""
    return _alternate(X, n_clusters, cs, alpha, opts, copts, t_max, True, "cs3c_plus", initial)


def run_s3c(X, n_clusters: int, alpha: float = 0.1, opts: SolverOptions = SolverOptions(),
            copts: ClusterOptions = ClusterOptions(), t_max: int = 10) -> ClusteringResult:
    """Structured sparse subspace clustering (no side-information)."""
    cs = ConstraintSet.empty(np.shape(X)[1])
    return _alternate(X, n_clusters, cs, alpha, opts, copts, t_max, False, "s3c")


def run_lsr(X, n_clusters: int, lam: float, variant: str = "lsr2", cs: Optional[ConstraintSet] = None,
            copts: ClusterOptions = ClusterOptions()) -> ClusteringResult:
    """Least-squares representation baseline; constrained k-means when ``cs`` is given."""
    sol = solve_lsr(X, lam, variant)
    labels = spectral_stage(sol.C, n_clusters, cs, copts)
    method = variant.lower() + ("_plus" if cs is not None else "")
    return ClusteringResult(labels, sol.C, True, 1, [sol.objective], method)


def run_method(method: str, X, n_clusters: int, cs: Optional[ConstraintSet] = None, *,
               opts: SolverOptions = SolverOptions(), copts: ClusterOptions = ClusterOptions(),
               alpha: float = 0.1, t_max: int = 10, lsr_lambda: Optional[float] = None) -> ClusteringResult:
    """Dispatch by method name (see ``METHODS``).

    Constrained methods given ``cs=None`` run with an empty constraint set.
    LSR methods use ``lsr_lambda`` (falling back to ``opts.lam``).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    N = np.shape(X)[1]
    if cs is None:
        cs = ConstraintSet.empty(N)
    if method == "ssc":
        return run_ssc(X, n_clusters, opts, copts)
    if method == "ssc_plus":
        return run_ssc_plus(X, n_clusters, cs, opts, copts)
    if method == "cssc":
        return run_cssc(X, n_clusters, cs, opts, copts)
    if method == "cssc_plus":
        return run_cssc_plus(X, n_clusters, cs, opts, copts)
    if method == "s3c":
        return run_s3c(X, n_clusters, alpha, opts, copts, t_max)
    if method == "cs3c":
        return run_cs3c(X, n_clusters, cs, alpha, opts, copts, t_max)
    if method == "cs3c_plus":
        return run_cs3c_plus(X, n_clusters, cs, alpha, opts, copts, t_max)
    lam = opts.lam if lsr_lambda is None else lsr_lambda
    variant, plus = method[:4], method.endswith("_plus")
    return run_lsr(X, n_clusters, lam, variant, cs if plus else None, copts)
