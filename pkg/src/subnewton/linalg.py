"""Dense linear-algebra kernels and sketching transforms.

Everything here is pure: functions never mutate their inputs, and the
randomized constructor takes an explicit seed, so concurrent callers with
distinct seeds are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrixError",
    "NotPositiveDefiniteError",
    "qr_thin",
    "cholesky_solve",
    "conjugate_gradient",
    "CgResult",
    "SparseEmbedding",
    "sparse_embedding",
    "identity_embedding",
    "apply_sparse_embedding",
    "symmetric_eig_extremes",
    "psd_sqrt",
]

# Relative tolerance below which an R diagonal entry counts as a rank drop.
RANK_TOL = 1e-12

# A symmetric matrix passes the PSD check if its most negative eigenvalue
# is no smaller than -PSD_TOL times the largest one.
PSD_TOL = 1e-10


class SingularMatrixError(ValueError):
    """Input matrix is (numerically) rank deficient."""


class NotPositiveDefiniteError(ValueError):
    """Operator or matrix that should be positive (semi)definite is not."""


def qr_thin(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization M = Q R for a tall, full-column-rank matrix.

    Raises :class:`SingularMatrixError` when some ``|R[i, i]|`` falls below
    ``1e-12 * ||M||_F``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={M.ndim}")
    if M.shape[0] < M.shape[1]:
        raise ValueError(f"expected rows >= cols, got shape {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    fro = np.linalg.norm(M)
    if np.min(np.abs(np.diag(R))) < RANK_TOL * fro:
        raise SingularMatrixError("matrix is rank deficient within tolerance")
    return Q, R


def cholesky_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve M x = b for symmetric positive definite M via Cholesky."""
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Cholesky failed: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


class CgResult(NamedTuple):
    x: np.ndarray
    iters: int
    achieved_residual: float


def conjugate_gradient(
    apply_M: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    rel_residual_tol: float = 1e-6,
    max_iters: int = 1000,
    callback: Optional[Callable[[np.ndarray], None]] = None,
) -> CgResult:
    """Conjugate gradients for M x = b with a symmetric PSD operator.

    Starts from x = 0 and stops when ``||M x - b|| <= rel_residual_tol * ||b||``
    or after ``max_iters`` iterations.  The reported residual is recomputed
    from the returned iterate, not the recursive estimate.  Negative
    curvature beyond round-off (``p' M p < -1e-14 ||p||^2``) raises
    :class:`NotPositiveDefiniteError`.
    """
    b = np.asarray(b, dtype=float)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        raise ValueError("right-hand side must be nonzero")
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    iters = 0
    while iters < max_iters and np.sqrt(rs) > rel_residual_tol * norm_b:
        Mp = apply_M(p)
        curvature = float(p @ Mp)
        if curvature <= 0.0:
            if curvature < -1e-14 * float(p @ p):
                raise NotPositiveDefiniteError(
                    f"CG breakdown: direction curvature {curvature:.3e} < 0"
                )
            break  # stagnated on a numerically null direction
        alpha = rs / curvature
        x += alpha * p
        r -= alpha * Mp
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        iters += 1
        if callback is not None:
            callback(x.copy())
    achieved = float(np.linalg.norm(apply_M(x) - b) / norm_b)
    return CgResult(x, iters, achieved)


@dataclass(frozen=True)
class SparseEmbedding:
    """One-nonzero-per-input-row sketching transform.

    Input row ``i`` is added into target row ``column_map[i]`` with sign
    ``sign_map[i]``; applying the transform costs one pass over the input.
    """

    target_rows: int
    column_map: np.ndarray
    sign_map: np.ndarray
    seed: int

    @property
    def input_rows(self) -> int:
        return self.column_map.shape[0]


def sparse_embedding(input_rows: int, target_rows: int, seed: int) -> SparseEmbedding:
    """Draw a random sparse embedding; identical seeds give identical maps."""
    if input_rows < 1 or target_rows < 1:
        raise ValueError("input_rows and target_rows must be positive")
    rng = np.random.default_rng(seed)
    column_map = rng.integers(0, target_rows, size=input_rows)
    sign_map = rng.choice(np.array([-1.0, 1.0]), size=input_rows)
    return SparseEmbedding(target_rows, column_map, sign_map, seed)


def identity_embedding(input_rows: int) -> SparseEmbedding:
    """Embedding that maps every row to itself with sign +1."""
    return SparseEmbedding(
        input_rows, np.arange(input_rows), np.ones(input_rows), seed=0
    )


def apply_sparse_embedding(S: SparseEmbedding, M: np.ndarray) -> np.ndarray:
    """Compute the sketch S M, an (target_rows x cols) matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != S.input_rows:
        raise ValueError(
            f"embedding built for {S.input_rows} rows, input has shape {M.shape}"
        )
    out = np.zeros((S.target_rows, M.shape[1]))
    np.add.at(out, S.column_map, S.sign_map[:, None] * M)
    return out


def symmetric_eig_extremes(M: np.ndarray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    w = np.linalg.eigvalsh(M)
    return float(w[0]), float(w[-1])


def psd_sqrt(Q: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues in ``[-tol * lambda_max, 0)`` are clamped to zero; anything
    more negative raises :class:`NotPositiveDefiniteError`.  Scaled-identity
    and diagonal inputs take an analytic shortcut.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {Q.shape}")
    if not np.array_equal(Q, Q.T):
        if np.max(np.abs(Q - Q.T)) > tol * max(1.0, np.max(np.abs(Q))):
            raise ValueError("matrix is not symmetric")
        Q = 0.5 * (Q + Q.T)
    diag = np.diag(Q)
    if np.count_nonzero(Q - np.diag(diag)) == 0:
        if np.min(diag) < -tol * max(np.max(diag), 0.0):
            raise NotPositiveDefiniteError("diagonal matrix has negative entries")
        return np.diag(np.sqrt(np.clip(diag, 0.0, None)))
    w, V = np.linalg.eigh(Q)
    if w[0] < -tol * max(w[-1], 0.0):
        raise NotPositiveDefiniteError(
            f"eigenvalue {w[0]:.3e} below PSD tolerance"
        )
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T
