"""Data ingestion, side-information sampling and synthetic union-of-subspaces data.

Data matrices are stored feature-by-sample (``D x N``): every column is one
data point. Cluster labels are plain integer arrays; files on disk use
1-based cluster ids, in-memory arrays use whatever ids the caller provides
(pipelines emit ``0..n-1``).
"""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

MUST_LINK = "ML"
CANNOT_LINK = "CL"

ORIENTATIONS = ("rows-are-features", "rows-are-samples")


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed."""


class InconsistentConstraintsError(ValueError):
    """Raised when a cannot-link joins two points that are must-linked."""


@dataclass(frozen=True)
class DataMatrix:
    """Feature-by-sample matrix with optional row/column names."""

    values: np.ndarray
    feature_names: Optional[list] = None
    sample_names: Optional[list] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("data matrix must be two-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("data matrix contains NaN or Inf entries")
        if values.shape[0] < 1 or values.shape[1] < 2:
            raise ValueError(f"need D >= 1 and N >= 2, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=0)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class ConstraintSet:
    """Pairwise must-link / cannot-link side-information over ``n_samples`` points.

    ``pairs`` holds unordered pairs as rows ``(i, j)`` with ``i < j``;
    ``must_link[k]`` is True for a must-link and False for a cannot-link.
    Consistency (no cannot-link inside a must-link component) is checked on
    construction.
    """

    pairs: np.ndarray
    must_link: np.ndarray
    n_samples: int
    _components: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        must_link = np.asarray(self.must_link, dtype=bool).reshape(-1)
        if len(pairs) != len(must_link):
            raise ValueError("pairs and must_link must have equal length")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if len(pairs):
            if pairs.min() < 0 or pairs.max() >= self.n_samples:
                raise ValueError(f"constraint index out of range [0, {self.n_samples})")
            if np.any(pairs[:, 0] == pairs[:, 1]):
                k = int(np.flatnonzero(pairs[:, 0] == pairs[:, 1])[0])
                raise ValueError(f"self-pair ({pairs[k, 0]}, {pairs[k, 1]}) is not a constraint")
        pairs = np.sort(pairs, axis=1)
        keys = pairs[:, 0] * self.n_samples + pairs[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if np.any(counts > 1):
            dup = int(uniq[counts > 1][0])
            raise ValueError(f"duplicate constraint on pair ({dup // self.n_samples}, {dup % self.n_samples})")
        pairs.setflags(write=False)
        must_link.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "must_link", must_link)

        ml = pairs[must_link]
        graph = coo_matrix(
            (np.ones(len(ml)), (ml[:, 0], ml[:, 1])), shape=(self.n_samples, self.n_samples)
        )
        _, comp = connected_components(graph, directed=False)
        comp.setflags(write=False)
        cl = pairs[~must_link]
        bad = comp[cl[:, 0]] == comp[cl[:, 1]]
        if np.any(bad):
            i, j = cl[np.flatnonzero(bad)[0]]
            raise InconsistentConstraintsError(
                f"cannot-link ({i}, {j}) contradicts the transitive closure of the must-links"
            )
        object.__setattr__(self, "_components", comp)

    @classmethod
    def empty(cls, n_samples: int) -> "ConstraintSet":
        return cls(np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=bool), n_samples)

    @classmethod
    def from_triples(cls, triples: Sequence, n_samples: int) -> "ConstraintSet":
        """Build from ``(i, j, kind)`` triples with kind ``"ML"`` or ``"CL"``."""
        pairs, ml = [], []
        for i, j, kind in triples:
            kind = str(kind).upper()
            if kind not in (MUST_LINK, CANNOT_LINK):
                raise ValueError(f"unknown constraint kind {kind!r}")
            pairs.append((int(i), int(j)))
            ml.append(kind == MUST_LINK)
        return cls(np.array(pairs, dtype=np.int64).reshape(-1, 2), np.array(ml, dtype=bool), n_samples)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        for (i, j), m in zip(self.pairs, self.must_link):
            yield int(i), int(j), MUST_LINK if m else CANNOT_LINK

    @property
    def n_entries(self) -> int:
        """Size of the index set as ordered entries: each pair counts twice."""
        return 2 * len(self.pairs)

    @property
    def target(self) -> np.ndarray:
        """Ground-truth structure value per pair: 0 for must-link, 1 for cannot-link."""
        return (~self.must_link).astype(np.int64)

    def components(self) -> np.ndarray:
        """Must-link component id of every point (transitive closure)."""
        return self._components

    def cannot_link_pairs(self) -> np.ndarray:
        return self.pairs[~self.must_link]

    def must_link_pairs(self) -> np.ndarray:
        return self.pairs[self.must_link]

    def violations(self, labels) -> int:
        """Number of constraints the labelling breaks."""
        labels = np.asarray(labels)
        same = labels[self.pairs[:, 0]] == labels[self.pairs[:, 1]]
        return int(np.sum(same != self.must_link))


def load_matrix(path, orientation: str = "rows-are-features") -> DataMatrix:
    """Read a CSV/TSV matrix, returning it feature-by-sample.

    The delimiter (comma or tab) is detected from the first non-empty line.
    A header row is recognised when none of its cells past the first parse as
    numbers; a label column when none of its data cells do. Any other
    non-numeric cell is an error reporting its 1-based line and column.
    """
    if orientation not in ORIENTATIONS:
        raise ValueError(f"orientation must be one of {ORIENTATIONS}, got {orientation!r}")
    path = Path(path)
    text = path.read_text()
    lines = [(k + 1, ln) for k, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    delimiter = "\t" if "\t" in lines[0][1] else ","
    rows = [(lineno, [c.strip() for c in next(csv.reader([ln], delimiter=delimiter))]) for lineno, ln in lines]

    width = len(rows[0][1])
    for lineno, cells in rows:
        if len(cells) != width:
            raise DataFormatError(f"{path}: line {lineno} has {len(cells)} cells, expected {width} (ragged rows)")

    header = None
    if not any(_is_number(c) for c in rows[0][1][1:]) and (width > 1 or not _is_number(rows[0][1][0])):
        header = rows[0][1]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    row_names = None
    if not any(_is_number(cells[0]) for _, cells in rows):
        row_names = [cells[0] for _, cells in rows]
        rows = [(lineno, cells[1:]) for lineno, cells in rows]
        if header is not None:
            header = header[1:]
        col_offset = 2
    else:
        col_offset = 1

    values = np.empty((len(rows), len(rows[0][1])), dtype=np.float64)
    for r, (lineno, cells) in enumerate(rows):
        for c, cell in enumerate(cells):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-numeric cell {cell!r} at line {lineno}, column {c + col_offset}"
                ) from None
    if not np.all(np.isfinite(values)):
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(f"{path}: non-finite value at data row {r + 1}, column {c + col_offset}")

    if orientation == "rows-are-samples":
        return DataMatrix(values.T.copy(), feature_names=header, sample_names=row_names)
    return DataMatrix(values, feature_names=row_names, sample_names=header)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def save_matrix(path, values, fmt="%.10g"):
    np.savetxt(path, np.asarray(values), delimiter=",", fmt=fmt)


def normalize_columns(X):
    """Scale every column of ``X`` to unit Euclidean norm."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"column {zero[0]} is all zeros and cannot be normalized")
    return X / norms


def load_labels(path) -> np.ndarray:
    """Read one 1-based integer cluster id per line."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: expected an integer label, got {line!r}") from None
    labels = np.array(out, dtype=np.int64)
    if labels.size and labels.min() < 1:
        raise DataFormatError(f"{path}: cluster ids are 1-based")
    return labels


def save_labels(path, labels):
    """Write labels as 1-based cluster ids, one per line."""
    labels = canonical_labels(labels) + 1
    Path(path).write_text("".join(f"{v}\n" for v in labels))


def load_constraints(path, n_samples: int) -> ConstraintSet:
    """Read ``i j ML`` / ``i j CL`` lines (0-based indices)."""
    triples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 3:
            raise DataFormatError(f"{path}: line {lineno}: expected 'i j ML|CL', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: indices must be integers") from None
        triples.append((i, j, parts[2]))
    return ConstraintSet.from_triples(triples, n_samples)


def save_constraints(path, cs: ConstraintSet):
    Path(path).write_text("".join(f"{i} {j} {kind}\n" for i, j, kind in cs))


def canonical_labels(labels) -> np.ndarray:
    """Relabel to ``0..k-1`` in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


def sample_side_information(truth, p: float, seed: int) -> ConstraintSet:
    """Draw ``floor(p * N(N-1)/2)`` distinct unordered pairs uniformly at random.

    Each pair becomes a must-link when ``truth`` puts both points in the same
    cluster and a cannot-link otherwise.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    truth = np.asarray(truth)
    N = truth.shape[0]
    total = N * (N - 1) // 2
    k = min(total, math.floor(p * total))
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=k, replace=False))
    rows, cols = np.triu_indices(N, 1)
    pairs = np.column_stack([rows[picks], cols[picks]])
    return ConstraintSet(pairs, truth[pairs[:, 0]] == truth[pairs[:, 1]], N)


def build_weight_matrix(cs: ConstraintSet, cannot_link_scale: float = 1.0) -> np.ndarray:
    """Weights ``exp(-1)`` on must-links, ``exp(+1)`` on cannot-links, 1 elsewhere.

    ``cannot_link_scale`` multiplies the cannot-link weight; a large value
    (e.g. 1e6) makes cannot-links nearly hard in the coefficient problem.
    """
    if not cannot_link_scale > 0:
        raise ValueError("cannot_link_scale must be positive")
    psi = np.ones((cs.n_samples, cs.n_samples))
    i, j = cs.pairs[:, 0], cs.pairs[:, 1]
    w = np.where(cs.must_link, np.exp(-1.0), cannot_link_scale * np.exp(1.0))
    psi[i, j] = w
    psi[j, i] = w
    return psi


def generate_union_of_subspaces(D: int, n: int, d: int, m: int, noise_sigma: float = 0.0, seed: int = 0):
    """Sample ``m`` unit-norm points from each of ``n`` random ``d``-dim subspaces of R^D.

    Returns
    -------
    X : ndarray, shape (D, n*m)
        Column-normalized data, subspace blocks in order.
    labels : ndarray, shape (n*m,)
        Subspace index (0-based) of every column.
    """
    if not 0 < d < D:
        raise ValueError(f"need 0 < d < D, got d={d}, D={D}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(n):
        basis, _ = np.linalg.qr(rng.standard_normal((D, d)))
        pts = basis @ rng.standard_normal((d, m))
        blocks.append(pts / np.linalg.norm(pts, axis=0))
    X = np.hstack(blocks)
    if noise_sigma > 0:
        X = X + noise_sigma * rng.standard_normal(X.shape)
    X = normalize_columns(X)
    labels = np.repeat(np.arange(n), m)
    return X, labels
