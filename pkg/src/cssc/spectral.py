"""Affinity graphs, spectral embedding and (constrained) k-means quantization."""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .dataset import ConstraintSet, canonical_labels
from .selfexpress import structure_weights

DEGREE_EPS = 1e-10


@dataclass(frozen=True)
class Affinity:
    """Symmetric nonnegative affinity ``A`` with its degree vector and Laplacian."""

    A: np.ndarray

    @property
    def degree(self) -> np.ndarray:
        return self.A.sum(axis=0)

    @property
    def laplacian(self) -> np.ndarray:
        return np.diag(self.degree) - self.A


def affinity_from_coefficients(C) -> Affinity:
    """``A = (|C| + |C^T|) / 2``."""
    C = np.abs(np.asarray(C, dtype=np.float64))
    return Affinity(0.5 * (C + C.T))


def laplacian(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    return np.diag(A.sum(axis=0)) - A


def spectral_embedding(A, n_clusters: int, regularize: bool = False) -> np.ndarray:
    """Relaxed indicators minimizing ``trace(Q^T L Q)`` s.t. ``Q^T D Q = I``.

    Solved through the symmetric matrix ``D^{-1/2} L D^{-1/2}``; the returned
    columns are the generalized eigenvectors of ``(L, D)`` belonging to the
    ``n_clusters`` smallest eigenvalues. With ``regularize`` the degrees are
    shifted by ``DEGREE_EPS`` so isolated vertices are tolerated.
    """
    if isinstance(A, Affinity):
        A = A.A
    A = np.asarray(A, dtype=np.float64)
    N = A.shape[0]
    if not 1 <= n_clusters <= N:
        raise ValueError(f"need 1 <= n_clusters <= N={N}, got {n_clusters}")
    deg = A.sum(axis=0)
    if regularize:
        deg = deg + DEGREE_EPS
    elif np.any(deg <= 0):
        v = int(np.flatnonzero(deg <= 0)[0])
        raise ValueError(f"vertex {v} has zero degree; enable degree regularization")
    L = np.diag(deg) - A
    if regularize:
        L = L - DEGREE_EPS * np.eye(N)
    d_isqrt = 1.0 / np.sqrt(deg)
    L_sym = d_isqrt[:, None] * L * d_isqrt[None, :]
    L_sym = 0.5 * (L_sym + L_sym.T)
    _, vecs = eigh(L_sym, subset_by_index=[0, n_clusters - 1])
    return d_isqrt[:, None] * vecs


def subspace_structured_norm(C, Q) -> float:
    """``sum_ij |C_ij| * 0.5 * ||q_i - q_j||^2`` for a segmentation (or labels) ``Q``."""
    return float(np.sum(np.abs(np.asarray(C)) * structure_weights(Q)))


def kmeans(E, n_clusters: int, seed: int = 0, n_init: int = 20, max_iter: int = 300) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` runs by WCSS."""
    E = np.asarray(E, dtype=np.float64)
    return constrained_kmeans(E, n_clusters, ConstraintSet.empty(E.shape[0]), seed, n_init, max_iter)


class InfeasibleConstraintsError(RuntimeError):
    """Raised when constrained k-means finds no feasible assignment."""


def constrained_kmeans(E, n_clusters: int, cs: ConstraintSet, seed: int = 0, n_init: int = 20,
                       max_iter: int = 300, max_attempts=None) -> np.ndarray:
    """k-means whose output honours every must-link and cannot-link.

    Must-link components are collapsed into weighted super-points, so
    must-links hold by construction. In each assignment pass super-points are
    visited by decreasing mass (ties by index) and take the nearest centroid
    holding no cannot-linked super-point, backtracking on dead ends. A seeding
    whose assignment search fails is dropped and a fresh one drawn; up to ``max_attempts`` seedings
    (default ``10 * n_init``) are tried to collect ``n_init`` feasible runs.

    Returns
    -------
    labels : ndarray of int, shape (N,)
        Canonical labels ``0..k-1`` (order of first appearance).
    """
    E = np.asarray(E, dtype=np.float64)
    if E.ndim == 1:
        E = E[:, None]
    N = E.shape[0]
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if cs.n_samples != N:
        raise ValueError(f"constraint set covers {cs.n_samples} points, embedding has {N}")
    if n_clusters == 1:
        if len(cs.cannot_link_pairs()):
            raise InfeasibleConstraintsError("cannot-links present but only one cluster requested")
        return np.zeros(N, dtype=np.int64)

    comp = cs.components()
    n_sp = int(comp.max()) + 1
    mass = np.bincount(comp, minlength=n_sp).astype(np.float64)
    points = np.zeros((n_sp, E.shape[1]))
    np.add.at(points, comp, E)
    points /= mass[:, None]

    cl = cs.cannot_link_pairs()
    neighbors = None
    if len(cl):
        a, b = comp[cl[:, 0]], comp[cl[:, 1]]
        neighbors = [set() for _ in range(n_sp)]
        for u, v in zip(a.tolist(), b.tolist()):
            neighbors[u].add(v)
            neighbors[v].add(u)
    order = np.lexsort((np.arange(n_sp), -mass))

    if max_attempts is None:
        max_attempts = 10 * n_init
    children = np.random.SeedSequence(seed).spawn(max_attempts)
    best = None
    successes = 0
    for attempt in range(max_attempts):
        rng = np.random.default_rng(children[attempt])
        sp_labels = _lloyd(points, mass, n_clusters, rng, neighbors, order, max_iter)
        if sp_labels is None:
            continue
        labels = sp_labels[comp]
        wcss = _wcss(E, labels, n_clusters)
        if best is None or wcss < best[0]:
            best = (wcss, labels)
        successes += 1
        if successes == n_init:
            break
    if best is None:
        raise InfeasibleConstraintsError(
            f"no feasible assignment in {max_attempts} seedings; raise the attempt budget "
            f"or check that the cannot-links admit a {n_clusters}-coloring"
        )
    return canonical_labels(best[1])


def _wcss(E, labels, k):
    total = 0.0
    for c in range(k):
        members = E[labels == c]
        if len(members):
            total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total


def _plusplus(points, mass, k, rng):
    n = len(points)
    centers = [int(rng.choice(n, p=mass / mass.sum()))]
    d2 = np.sum((points - points[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        w = mass * d2
        if w.sum() <= 0:
            # fewer distinct locations than clusters
            w = mass.copy()
            w[centers] = 0.0
            if w.sum() <= 0:
                w = np.ones(n)
        nxt = int(rng.choice(n, p=w / w.sum()))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[centers].copy()


def _assign(points, centers, neighbors, order):
    dist = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    if neighbors is None:
        return np.argmin(dist, axis=1)
    return _feasible_assignment(np.argsort(dist, axis=1, kind="stable"), neighbors, order)


_SEARCH_BUDGET = 100_000


def _feasible_assignment(ranked, neighbors, order):
    """Depth-first search over super-points in ``order``, nearest centroid first.

    The first path explored is the greedy assignment; on a dead end the
    search backtracks. Returns None if the step budget runs out.
    """
    n, k = ranked.shape
    labels = np.full(n, -1, dtype=np.int64)
    tried = np.zeros(n, dtype=np.int64)
    pos = steps = 0
    while pos < n:
        steps += 1
        if steps > _SEARCH_BUDGET:
            return None
        sp = order[pos]
        blocked = {labels[v] for v in neighbors[sp]}
        labels[sp] = -1
        while tried[pos] < k:
            c = ranked[sp, tried[pos]]
            tried[pos] += 1
            if c not in blocked:
                labels[sp] = c
                break
        if labels[sp] >= 0:
            pos += 1
        else:
            tried[pos] = 0
            pos -= 1
            if pos < 0:
                return None
    return labels


def _lloyd(points, mass, k, rng, neighbors, order, max_iter):
    centers = _plusplus(points, mass, k, rng)
    labels = None
    for _ in range(max_iter):
        new = _assign(points, centers, neighbors, order)
        if new is None:
            return None
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            sel = labels == c
            if np.any(sel):
                centers[c] = np.average(points[sel], axis=0, weights=mass[sel])
            else:
                # empty cluster: move it to the worst-fit super-point
                cost = mass * np.sum((points - centers[labels]) ** 2, axis=1)
                centers[c] = points[int(np.argmax(cost))]
    return labels
