"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. The external-data check
runs only when ``CSSC_REFERENCE_DATA`` and ``CSSC_REFERENCE_LABELS`` point at
the 1000 x 103 expression matrix and its 4-class labels.
"""
import itertools
import os
import time

import cvxpy as cp
import numpy as np
import pytest

from cssc.dataset import (generate_union_of_subspaces, load_labels, load_matrix, normalize_columns,
                          sample_side_information)
from cssc.metrics import (clustering_error, rand_index, rand_index_estimator, rie_deviation_bound,
                          simulate_rie_deviation)
from cssc.modelselect import GridSpec, grid_search
from cssc.pipelines import ClusterOptions, run_cs3c, run_cs3c_plus, run_cssc, run_cssc_plus, run_ssc
from cssc.selfexpress import SolverOptions, lambda_from_lambda0, segmentation_matrix, solve_weighted_sparse
from cssc.spectral import laplacian, subspace_structured_norm


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail, started):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail} ({time.perf_counter() - started:.1f} s)")
        assert ok, f"{label}: {detail}"
    return emit


@pytest.fixture(scope="module")
def benchmark():
    return generate_union_of_subspaces(50, 4, 4, 25, 0.05, seed=0)


def test_structured_norm_trace_identity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        C = rng.standard_normal((10, 10))
        Q = segmentation_matrix(rng.integers(0, int(rng.integers(2, 4)), 10))
        A = np.abs(C)
        L = laplacian(0.5 * (A + A.T))
        worst = max(worst, abs(subspace_structured_norm(C, Q) - np.trace(Q.T @ L @ Q)))
    elapsed = time.perf_counter() - t0
    report("1 structured-norm trace identity", worst <= 1e-9 and elapsed < 1.0,
           f"max |difference| = {worst:.2e} over 100 pairs", t0)


def _conic_objective(X, W, lam):
    N = X.shape[1]
    C = cp.Variable((N, N))
    fit = 0.5 * lam * cp.sum_squares(X - X @ C)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(W, cp.abs(C))) + fit), [cp.diag(C) == 0])
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_admm_correctness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        N = int(rng.integers(2, 5))
        X = normalize_columns(rng.standard_normal((int(rng.integers(2, 6)), N)))
        W = rng.uniform(0.3, 3.0, (N, N))
        lam = float(rng.uniform(1, 30))
        ref = _conic_objective(X, W, lam)
        got = solve_weighted_sparse(X, W, SolverOptions(lam=lam)).objective
        worst = max(worst, abs(got - ref) / abs(ref))
    X, y = generate_union_of_subspaces(30, 3, 3, 20, 0.0, seed=0)
    opts = SolverOptions(lam=lambda_from_lambda0(X, 5.0))
    res = run_ssc(X, 3, opts)
    C = np.abs(res.coefficients)
    sp_err = C[y[:, None] != y[None, :]].sum() / C.sum()
    err = clustering_error(res.labels, y)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and sp_err < 0.01 and err == 0 and elapsed < 10
    report("2 ADMM vs conic oracle + noiseless SSC", ok,
           f"max rel. objective gap {worst:.1e}, subspace-preserving error {100 * sp_err:.3f}%, ERR {err}", t0)


def test_plus_pipelines_always_feasible(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    violations = runs = 0
    for r in range(200):
        n = int(rng.integers(2, 5))
        X, y = generate_union_of_subspaces(int(rng.integers(15, 40)), n, int(rng.integers(2, 4)),
                                           int(rng.integers(8, 16)), float(rng.uniform(0, 0.3)), seed=r)
        cs = sample_side_information(y, float(rng.uniform(0.01, 0.3)), r)
        opts = SolverOptions(lam=lambda_from_lambda0(X, float(rng.uniform(2, 10))))
        copts = ClusterOptions(seed=r, regularize_degree=True)
        if r % 2:
            res = run_cs3c_plus(X, n, cs, float(rng.uniform(0.05, 2.0)), opts, copts)
        else:
            res = run_cssc_plus(X, n, cs, opts, copts)
        violations += cs.violations(res.labels)
        if len(cs):
            violations += rand_index_estimator(res.labels, cs) != 1.0
        runs += 1
    report("3 feasibility of CSSC+/CS3C+", violations == 0 and runs == 200,
           f"{violations} violated constraints over {runs} runs", t0)


def test_rand_index_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(100):
        N = int(rng.integers(2, 51))
        truth = rng.integers(0, int(rng.integers(1, 7)), N)
        pred = rng.integers(0, int(rng.integers(1, 7)), N)
        cs = sample_side_information(truth, 1.0, 0)
        mismatches += rand_index_estimator(pred, cs) != rand_index(pred, truth)
    hand = rand_index([1, 1, 2], [1, 2, 2]) == 1 / 3 and rand_index([1, 2], [1, 1]) == 0.0
    report("4 Rand index oracle", mismatches == 0 and hand,
           f"{mismatches} mismatches in 100 pairs, hand cases {'ok' if hand else 'wrong'}", t0)


def test_deviation_bound_monte_carlo(report):
    t0 = time.perf_counter()
    bound = rie_deviation_bound(0.3, 60)
    check = simulate_rie_deviation(60, 0.3, trials=1000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = check.violation_rate == 0 and abs(bound - 2 / 1061) < 1e-15 and elapsed < 30
    report("5 deviation bound at N=60, p=0.3", ok,
           f"bound {bound:.4e}, violations {check.violation_rate:.1%} of 1000, "
           f"median |mu_hat - mu| {np.median(check.deviations):.4e}, max {check.max_deviation:.4e}", t0)


def _brute_force_error(pred, truth):
    p_ids, t_ids = np.unique(pred), list(np.unique(truth))
    targets = t_ids + [None] * max(0, len(p_ids) - len(t_ids))
    best = 0
    for perm in itertools.permutations(targets, len(p_ids)):
        mapped = np.array([perm[np.searchsorted(p_ids, v)] for v in pred], dtype=object)
        best = max(best, int(np.sum(mapped == truth)))
    return 1 - best / len(pred)


def test_hungarian_matches_brute_force(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(500):
        N = int(rng.integers(1, 31))
        pred = rng.integers(0, int(rng.integers(1, 7)), N)
        truth = rng.integers(0, int(rng.integers(1, 7)), N)
        mismatches += clustering_error(pred, truth) != _brute_force_error(pred, truth)
    report("6 Hungarian ERR vs brute force", mismatches == 0, f"{mismatches} mismatches in 500 pairs", t0)


def test_method_ordering(report, benchmark):
    t0 = time.perf_counter()
    X, y = benchmark
    opts = SolverOptions(lam=lambda_from_lambda0(X, 5.0))
    errs = {m: [] for m in ("ssc", "cssc", "cssc_plus", "cs3c", "cs3c_plus")}
    for seed in range(20):
        cs = sample_side_information(y, 0.05, seed)
        copts = ClusterOptions(seed=seed)
        errs["ssc"].append(clustering_error(run_ssc(X, 4, opts, copts).labels, y))
        first = run_cssc(X, 4, cs, opts, copts)
        first_plus = run_cssc_plus(X, 4, cs, opts, copts)
        errs["cssc"].append(clustering_error(first.labels, y))
        errs["cssc_plus"].append(clustering_error(first_plus.labels, y))
        errs["cs3c"].append(clustering_error(run_cs3c(X, 4, cs, 0.1, opts, copts, initial=first).labels, y))
        errs["cs3c_plus"].append(
            clustering_error(run_cs3c_plus(X, 4, cs, 0.1, opts, copts, initial=first_plus).labels, y))
    mean = {m: float(np.mean(v)) for m, v in errs.items()}
    ok = (mean["cssc_plus"] <= mean["cssc"] <= mean["ssc"] + 0.01 and mean["cs3c_plus"] <= mean["cs3c"]
          and time.perf_counter() - t0 < 300)
    report("7 method ordering on the noisy benchmark", ok,
           ", ".join(f"{m} {100 * v:.2f}%" for m, v in mean.items()), t0)


def test_rie_tracks_accuracy(report, benchmark):
    t0 = time.perf_counter()
    X, y = benchmark
    cs = sample_side_information(y, 0.05, 0)
    # wide enough that ERR varies; on the narrower default range it is 0 everywhere
    spec = GridSpec((0.5, 0.8, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0, 300.0, 1000.0), (0.1, 0.5, 1.0, 2.0),
                    "cs3c", seeds=(0, 1, 2))
    res = grid_search(X, 4, cs, spec, truth=y)
    rho = res.surface.rie_err_correlation()
    best = res.surface.best()
    min_err = min(c.mean_err for c in res.surface.valid())
    ok = rho > 0.5 and best.mean_err <= min_err + best.std_err
    report("8 RIE vs accuracy over the grid", ok,
           f"Spearman {rho:.3f}; selected lambda0={best.lambda0:g}, alpha={best.alpha:g} with ERR "
           f"{100 * best.mean_err:.2f}% (grid minimum {100 * min_err:.2f}%)", t0)


@pytest.mark.skipif(not (os.environ.get("CSSC_REFERENCE_DATA") and os.environ.get("CSSC_REFERENCE_LABELS")),
                    reason="set CSSC_REFERENCE_DATA and CSSC_REFERENCE_LABELS to run")
def test_novartis_reference_numbers(report):
    t0 = time.perf_counter()
    orientation = os.environ.get("CSSC_REFERENCE_ORIENTATION", "rows-are-features")
    X = normalize_columns(load_matrix(os.environ["CSSC_REFERENCE_DATA"], orientation).values)
    y = load_labels(os.environ["CSSC_REFERENCE_LABELS"])
    opts = SolverOptions(lam=lambda_from_lambda0(X, 5.0))
    ssc = clustering_error(run_ssc(X, 4, opts).labels, y)
    plus = np.mean([clustering_error(run_cssc_plus(X, 4, sample_side_information(y, 0.05, s), opts,
                                                   ClusterOptions(seed=s)).labels, y) for s in range(20)])
    ok = abs(ssc - 0.0291) <= 0.02 and abs(plus - 0.0044) <= 0.015
    report("9 expression data reference errors", ok, f"SSC {100 * ssc:.2f}%, CSSC+ {100 * plus:.2f}%", t0)
