"""Dense linear algebra kernels shared by the filters, solvers and audits.

Vectors and matrices are plain ``numpy`` float arrays. Index sets (supports
such as ``T_t`` or ``N_t``) are sorted, duplicate-free ``int64`` arrays.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "ContractError",
    "SingularMatrixError",
    "as_index_set",
    "columns",
    "least_squares",
    "spd_solve",
    "eig_extremes",
]

RANK_TOL = 1e-10


class ContractError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix that must be invertible (or positive definite) is not.

    ``lambda_min`` carries the best available estimate of the smallest
    eigenvalue of the offending Gram/SPD matrix, or ``None``.
    """

    def __init__(self, message, lambda_min=None):
        super().__init__(message)
        self.lambda_min = lambda_min


def as_index_set(indices, m=None) -> np.ndarray:
    """Normalise ``indices`` to a sorted, unique int64 array.

    If ``m`` is given every element must lie in ``[0, m)``.
    """
    idx = np.unique(np.asarray(indices, dtype=np.int64).ravel())
    if idx.size and idx[0] < 0:
        raise ContractError(f"negative index {idx[0]} in index set")
    if m is not None and idx.size and idx[-1] >= m:
        raise ContractError(f"index {idx[-1]} out of range for dimension {m}")
    return idx


def columns(A, T) -> np.ndarray:
    """Return ``A_T``, the columns of ``A`` listed in ``T`` (in order)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ContractError("columns() expects a 2-D matrix")
    T = np.asarray(T, dtype=np.int64).ravel()
    if T.size and (T.min() < 0 or T.max() >= A.shape[1]):
        raise ContractError(
            f"column index out of range for matrix with {A.shape[1]} columns"
        )
    return A[:, T]


def least_squares(A_T, y) -> np.ndarray:
    """Solve ``min_b ||y - A_T b||_2`` through a Householder QR factorisation.

    Raises SingularMatrixError when the smallest ``|R_ii|`` falls below
    ``1e-10`` times the largest, i.e. when ``A_T`` is numerically rank
    deficient.
    """
    A_T = np.asarray(A_T, dtype=float)
    y = np.asarray(y, dtype=float)
    if A_T.ndim != 2 or A_T.shape[0] != y.shape[0]:
        raise ContractError(f"shape mismatch: A_T {A_T.shape}, y {y.shape}")
    k = A_T.shape[1]
    if k == 0:
        return np.zeros(0)
    if k > A_T.shape[0]:
        raise SingularMatrixError(
            f"{k} columns in {A_T.shape[0]} dimensions cannot be full rank",
            lambda_min=0.0,
        )
    Q, R = np.linalg.qr(A_T, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.min() < RANK_TOL * diag.max():
        sv = np.linalg.svd(R, compute_uv=False)
        raise SingularMatrixError(
            "A_T is rank deficient", lambda_min=float(sv[-1] ** 2)
        )
    return scipy.linalg.solve_triangular(R, Q.T @ y, lower=False)


def spd_solve(M, b) -> np.ndarray:
    """Solve ``M x = b`` for symmetric positive definite ``M`` (Cholesky)."""
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError(f"spd_solve needs a square matrix, got {M.shape}")
    if M.shape[0] == 0:
        return np.zeros_like(b)
    scale = 1.0 + np.abs(M).max()
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise ContractError("spd_solve needs a symmetric matrix")
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b)


def _round_robin(k):
    """Disjoint pair schedules covering every (p, q) pair once per sweep."""
    players = list(range(k)) + ([-1] if k % 2 else [])
    n = len(players)
    rounds = []
    for _ in range(n - 1):
        pairs = [(players[i], players[n - 1 - i]) for i in range(n // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def eig_extremes(M, tol=1e-15, max_sweeps=60) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix.

    Cyclic Jacobi rotations in round-robin order: every round annihilates a
    set of disjoint off-diagonal pairs at once, and ``k - 1`` rounds make a
    full sweep.
    """
    M = np.array(M, dtype=float, copy=True)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ContractError(f"eig_extremes needs a non-empty square matrix, got {M.shape}")
    k = M.shape[0]
    scale = np.abs(M).max()
    if np.abs(M - M.T).max() > 1e-10 * (1.0 + scale):
        raise ContractError("eig_extremes needs a symmetric matrix")
    M = 0.5 * (M + M.T)
    if k == 1:
        return float(M[0, 0]), float(M[0, 0])

    fro = np.linalg.norm(M)
    rounds = _round_robin(k)
    for _ in range(max_sweeps):
        off = np.linalg.norm(M - np.diag(np.diag(M)))
        if off <= tol * fro:
            break
        for P, Q in rounds:
            apq = M[P, Q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            theta = (M[Q, Q] - M[P, P]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            colP, colQ = M[:, P].copy(), M[:, Q].copy()
            M[:, P] = c * colP - s * colQ
            M[:, Q] = s * colP + c * colQ
            rowP, rowQ = M[P, :].copy(), M[Q, :].copy()
            c, s = c[:, None], s[:, None]
            M[P, :] = c * rowP - s * rowQ
            M[Q, :] = s * rowP + c * rowQ
            M[P, Q] = 0.0
            M[Q, P] = 0.0
    d = np.diag(M)
    return float(d.min()), float(d.max())
