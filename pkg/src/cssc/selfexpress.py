"""Weighted sparse self-expressive coding and least-squares baselines.

The central problem is

    min_C  ||C * W||_1 + lam * ||X - X C||_E    s.t. diag(C) = 0

with ``*`` the elementwise product, solved by ADMM. ``||.||_E`` is either
half the squared Frobenius norm (Gaussian noise, the default) or the
entrywise l1 norm (sparse outlying entries).
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

logger = logging.getLogger(__name__)

ERROR_NORMS = ("frobenius", "l1")
LSR_VARIANTS = ("lsr1", "lsr2")


@dataclass(frozen=True)
class SolverOptions:
    """ADMM settings.

    Parameters
    ----------
    lam : float
        Tradeoff between the weighted l1 penalty and the reconstruction error.
    rho : float
        Initial ADMM penalty parameter.
    adaptive_rho : bool
        Rebalance ``rho`` whenever one residual exceeds the other tenfold.
    max_iter : int
    tol_abs, tol_rel : float
        A run stops once both residual norms fall below
        ``tol_abs + tol_rel * scale`` (scale = norm of the matching iterate).
    error_norm : {'frobenius', 'l1'}
    """

    lam: float = 10.0
    rho: float = 10.0
    max_iter: int = 2000
    tol_abs: float = 1e-6
    tol_rel: float = 1e-4
    error_norm: str = "frobenius"
    adaptive_rho: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.tol_abs > 0 and self.tol_rel >= 0):
            raise ValueError("tolerances must be positive")
        if self.error_norm not in ERROR_NORMS:
            raise ValueError(f"error_norm must be one of {ERROR_NORMS}")

    def with_lambda(self, lam: float) -> "SolverOptions":
        return replace(self, lam=float(lam))


@dataclass
class SelfExpression:
    """Coefficient matrix returned by a solver, with convergence diagnostics."""

    C: np.ndarray
    converged: bool = True
    n_iter: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    objective: float = float("nan")


def lambda_from_lambda0(X, lambda0: float) -> float:
    """Scale ``lambda0`` by the smallest per-column maximal inner product.

    ``lam = lambda0 / min_j max_{i != j} x_i^T x_j``; columns are expected
    to be normalized.
    """
    if not lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    X = np.asarray(X, dtype=np.float64)
    G = X.T @ X
    np.fill_diagonal(G, -np.inf)
    denom = float(np.min(np.max(G, axis=0)))
    if not denom > 0:
        raise ValueError(
            f"min_j max_(i!=j) x_i^T x_j = {denom:.3g} is not positive; supply lambda directly"
        )
    return lambda0 / denom


def segmentation_matrix(labels, n_clusters=None) -> np.ndarray:
    """Binary ``N x n`` indicator matrix of a labelling."""
    labels = np.asarray(labels)
    ids, inv = np.unique(labels, return_inverse=True)
    n = len(ids) if n_clusters is None else max(n_clusters, len(ids))
    Q = np.zeros((labels.shape[0], n))
    Q[np.arange(labels.shape[0]), inv] = 1.0
    return Q


def as_segmentation(Q) -> np.ndarray:
    Q = np.asarray(Q)
    if Q.ndim == 1:
        return segmentation_matrix(Q)
    return Q.astype(np.float64)


def structure_weights(Q) -> np.ndarray:
    """``theta_ij = 0.5 * ||q_i - q_j||^2`` for the rows of a segmentation matrix."""
    Q = as_segmentation(Q)
    sq = np.sum(Q * Q, axis=1)
    return 0.5 * (sq[:, None] + sq[None, :]) - Q @ Q.T


def combine_structured_weights(psi, Q, alpha: float) -> np.ndarray:
    """Elementwise weights ``psi + alpha * theta`` so that
    ``||C * W||_1 = ||C * psi||_1 + alpha * ||C||_Q``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    psi = np.asarray(psi, dtype=np.float64)
    if alpha == 0:
        return psi.copy()
    return psi + alpha * structure_weights(Q)


def weighted_objective(X, C, W, lam: float, error_norm: str = "frobenius") -> float:
    X = np.asarray(X, dtype=np.float64)
    R = X - X @ C
    penalty = float(np.sum(np.abs(C) * W))
    if error_norm == "frobenius":
        return penalty + 0.5 * lam * float(np.sum(R * R))
    return penalty + lam * float(np.sum(np.abs(R)))


def _soft(V, thresh):
    return np.sign(V) * np.maximum(np.abs(V) - thresh, 0.0)


def solve_weighted_sparse(X, W=None, opts: SolverOptions = None) -> SelfExpression:
    """Minimize ``||C * W||_1 + lam ||X - XC||_E`` subject to ``diag(C) = 0``.

    Parameters
    ----------
    X : ndarray, shape (D, N)
        Data, one sample per column (normalized).
    W : ndarray, shape (N, N), optional
        Nonnegative weights; all-ones (plain sparse coding) when omitted.
    opts : SolverOptions

    Returns
    -------
    SelfExpression
        ``C`` has an exactly zero diagonal. ``converged`` is False when
        ``max_iter`` was reached first.
    """
    opts = opts or SolverOptions()
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[1]
    W = np.ones((N, N)) if W is None else np.asarray(W, dtype=np.float64)
    if W.shape != (N, N):
        raise ValueError(f"weight matrix must be {N}x{N}, got {W.shape}")
    if np.any(W < 0):
        raise ValueError("weights must be nonnegative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(W))):
        raise ValueError("data and weights must be finite")
    if opts.error_norm == "frobenius":
        out = _admm_frobenius(X, W, opts)
    else:
        out = _admm_l1(X, W, opts)
    out.objective = weighted_objective(X, out.C, W, opts.lam, opts.error_norm)
    if not out.converged:
        logger.warning(
            "ADMM stopped at max_iter=%d (primal %.2e, dual %.2e)",
            opts.max_iter, out.primal_residual, out.dual_residual,
        )
    return out


_BALANCE = 10.0
_RHO_STEP = 2.0
_RHO_PERIOD = 10
_RHO_FREEZE = 1000


def _rebalance(rho, r_norm, s_norm, it):
    # adapt only periodically and early, so rho is eventually constant
    if it % _RHO_PERIOD or it > _RHO_FREEZE:
        return rho
    if r_norm > _BALANCE * s_norm:
        return rho * _RHO_STEP
    if s_norm > _BALANCE * r_norm:
        return rho / _RHO_STEP
    return rho


def _admm_frobenius(X, W, opts):
    N = X.shape[1]
    lam, rho = opts.lam, opts.rho
    # (lam X^T X + rho I)^{-1} for any rho from one eigendecomposition
    evals, V = np.linalg.eigh(X.T @ X)
    evals = lam * np.maximum(evals, 0.0)
    VtG = evals[:, None] * V.T
    C = np.zeros((N, N))
    U = np.zeros((N, N))
    r_norm = s_norm = np.inf
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        J = V @ ((VtG + rho * (V.T @ (C - U))) / (evals + rho)[:, None])
        C_old = C
        C = _soft(J + U, W / rho)
        np.fill_diagonal(C, 0.0)
        U = U + J - C
        r_norm = np.linalg.norm(J - C)
        s_norm = rho * np.linalg.norm(C - C_old)
        if not (np.isfinite(r_norm) and np.isfinite(s_norm)):
            raise FloatingPointError(f"non-finite iterate at ADMM iteration {it}")
        eps_pri = opts.tol_abs + opts.tol_rel * max(np.linalg.norm(J), np.linalg.norm(C))
        eps_dual = opts.tol_abs + opts.tol_rel * rho * np.linalg.norm(U)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if opts.adaptive_rho:
            new_rho = _rebalance(rho, r_norm, s_norm, it)
            U *= rho / new_rho
            rho = new_rho
    return SelfExpression(C, converged, it, float(r_norm), float(s_norm))


def _admm_l1(X, W, opts):
    # Splitting: X = XJ + E, J = C. The (E, C) block updates are separable.
    D, N = X.shape
    lam, rho = opts.lam, opts.rho
    G = X.T @ X
    factor = cho_factor(G + np.eye(N))
    C = np.zeros((N, N))
    E = np.zeros((D, N))
    U1 = np.zeros((D, N))
    U2 = np.zeros((N, N))
    r_norm = s_norm = np.inf
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        J = cho_solve(factor, X.T @ (X - E + U1) + C - U2)
        XJ = X @ J
        E_old, C_old = E, C
        E = _soft(X - XJ + U1, lam / rho)
        C = _soft(J + U2, W / rho)
        np.fill_diagonal(C, 0.0)
        R1 = X - XJ - E
        R2 = J - C
        U1 = U1 + R1
        U2 = U2 + R2
        r_norm = np.sqrt(np.sum(R1 * R1) + np.sum(R2 * R2))
        s_norm = rho * np.linalg.norm(X.T @ (E - E_old) - (C - C_old))
        if not (np.isfinite(r_norm) and np.isfinite(s_norm)):
            raise FloatingPointError(f"non-finite iterate at ADMM iteration {it}")
        scale_pri = max(np.linalg.norm(XJ), np.linalg.norm(J), np.linalg.norm(E), np.linalg.norm(X), np.linalg.norm(C))
        scale_dual = rho * np.linalg.norm(U2 - X.T @ U1)
        if r_norm <= opts.tol_abs + opts.tol_rel * scale_pri and s_norm <= opts.tol_abs + opts.tol_rel * scale_dual:
            converged = True
            break
        if opts.adaptive_rho:
            new_rho = _rebalance(rho, r_norm, s_norm, it)
            U1 *= rho / new_rho
            U2 *= rho / new_rho
            rho = new_rho
    return SelfExpression(C, converged, it, float(r_norm), float(s_norm))


def solve_lsr(X, lam: float, variant: str = "lsr2") -> SelfExpression:
    """Closed-form least-squares representation.

    ``lsr2`` returns ``(X^T X + lam I)^{-1} X^T X``. ``lsr1`` additionally
    enforces a zero diagonal: with ``Z = (X^T X + lam I)^{-1}``,
    ``C_ij = -Z_ij / Z_jj`` off the diagonal.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    variant = variant.lower()
    if variant not in LSR_VARIANTS:
        raise ValueError(f"variant must be one of {LSR_VARIANTS}")
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[1]
    G = X.T @ X
    try:
        factor = cho_factor(G + lam * np.eye(N))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"LSR system is singular: {exc}") from exc
    if variant == "lsr2":
        C = cho_solve(factor, G)
    else:
        Z = cho_solve(factor, np.eye(N))
        C = -Z / np.diag(Z)[None, :]
        np.fill_diagonal(C, 0.0)
    R = X - X @ C
    obj = float(np.sum(R * R) + lam * np.sum(C * C))
    return SelfExpression(C, True, 0, 0.0, 0.0, obj)
