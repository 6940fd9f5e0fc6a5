"""Block sampling schemes for the factored Hessian.

A scheme assigns each row block of the factor stack A a probability p_i,
turns a budget s into inclusion probabilities ``q_i = min(s * p_i, 1)``,
and keeps block i independently with probability q_i, rescaled by
``1 / sqrt(q_i)``.  The expectation of the resulting Gram matrix is exactly
the original one, whatever the distribution.

Three distributions are provided:

- ``uniform``: p_i = 1/n;
- ``block_norm_squares``: p_i proportional to the squared Frobenius norm
  of block i;
- ``block_partial_leverage``: p_i proportional to the sum of the row
  leverage scores of block i inside the regularizer-augmented stack
  [A; Q^(1/2)].

The sampling-size functions translate a target spectral accuracy (eps,
failure probability delta) into a budget for each scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from subnewton.glm import BlockedMatrix
from subnewton.linalg import (
    SparseEmbedding,
    apply_sparse_embedding,
    psd_sqrt,
    sparse_embedding,
)

__all__ = [
    "UNIFORM",
    "BLOCK_NORM_SQUARES",
    "BLOCK_PARTIAL_LEVERAGE",
    "SCHEMES",
    "SamplingPlan",
    "BlockSample",
    "LeverageScores",
    "EmptySampleError",
    "augmented_matrix",
    "uniform_distribution",
    "block_norm_squares_distribution",
    "exact_block_partial_leverage_scores",
    "fast_block_partial_leverage_scores",
    "sampling_size_leverage",
    "sampling_size_leverage_raw",
    "sampling_size_block_norms",
    "sampling_size_block_norms_raw",
    "sampling_size_uniform",
    "sampling_size_uniform_raw",
    "sampling_plan",
    "draw_block_sample",
    "draw_block_sample_with_retry",
    "sampled_rows",
    "stable_rank",
]

UNIFORM = "uniform"
BLOCK_NORM_SQUARES = "block_norm_squares"
BLOCK_PARTIAL_LEVERAGE = "block_partial_leverage"
SCHEMES = (UNIFORM, BLOCK_NORM_SQUARES, BLOCK_PARTIAL_LEVERAGE)


class EmptySampleError(RuntimeError):
    """A draw kept no block; the caller should retry with a fresh seed."""


@dataclass(frozen=True)
class SamplingPlan:
    """Per-block probabilities p, inclusion probabilities q, and a seed."""

    scheme: str
    p: np.ndarray
    q: np.ndarray
    budget_s: int
    seed: int

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError("p must be nonnegative and sum to 1")
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("q entries must lie in [0, 1]")
        if self.budget_s < 1:
            raise ValueError("budget_s must be >= 1")

    @property
    def n_blocks(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True)
class BlockSample:
    """Kept block indices with their 1/sqrt(q_i) rescale factors."""

    kept_indices: np.ndarray
    scale_factors: np.ndarray


@dataclass(frozen=True)
class LeverageScores:
    """Per-block scores; approximate scores carry the claimed overestimate factor."""

    tau: np.ndarray
    is_approximate: bool = False
    beta_bound: float = 1.0

    @property
    def total(self) -> float:
        return float(self.tau.sum())

    def distribution(self) -> np.ndarray:
        total = self.total
        if total <= 0:
            raise ValueError("all leverage scores are zero")
        return self.tau / total


def augmented_matrix(A: BlockedMatrix, Q: np.ndarray) -> np.ndarray:
    """Stack A on top of the symmetric square root of Q."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (A.cols, A.cols):
        raise ValueError(f"Q must be {A.cols}x{A.cols}, got {Q.shape}")
    return np.vstack([A.entries, psd_sqrt(Q)])


def uniform_distribution(n_blocks: int) -> np.ndarray:
    return np.full(n_blocks, 1.0 / n_blocks)


def block_norm_squares_distribution(A: BlockedMatrix) -> np.ndarray:
    """p_i proportional to the squared Frobenius norm of block i."""
    norms_sq = A.block_norms_sq()
    total = float(norms_sq.sum())
    if total == 0.0:
        raise ValueError("all blocks are zero")
    return norms_sq / total


def _row_leverage(Abar: np.ndarray) -> np.ndarray:
    """Row leverage scores of Abar, with an SVD fallback for rank deficiency."""
    fro = np.linalg.norm(Abar)
    Qf, R = np.linalg.qr(Abar, mode="reduced")
    if np.min(np.abs(np.diag(R))) >= 1e-12 * fro:
        return np.einsum("ij,ij->i", Qf, Qf)
    U, s, _ = np.linalg.svd(Abar, full_matrices=False)
    keep = s > 1e-12 * s[0]
    U = U[:, keep]
    return np.einsum("ij,ij->i", U, U)


def exact_block_partial_leverage_scores(
    A: BlockedMatrix, Q: np.ndarray
) -> LeverageScores:
    """Exact block partial leverage scores of A with regularizer Q.

    The score of block i sums the row leverage scores of its rows inside
    [A; Q^(1/2)].  The scores are nonnegative and sum to at most the column
    count, with equality when Q = 0 and A has full column rank.
    """
    Abar = augmented_matrix(A, Q)
    row_tau = _row_leverage(Abar)[: A.entries.shape[0]]
    tau = row_tau.reshape(A.n_blocks, A.block_rows).sum(axis=1)
    return LeverageScores(tau=tau, is_approximate=False, beta_bound=1.0)


def fast_block_partial_leverage_scores(
    A: BlockedMatrix,
    Q: np.ndarray,
    sketch_rows: int,
    seed: int,
    beta_safety: float = 2.0,
    eps_sketch: float = 0.5,
    min_oversample: int = 20,
    embedding: SparseEmbedding | None = None,
) -> LeverageScores:
    """Sketched overestimates of the block partial leverage scores.

    Sketches the augmented stack, takes R from the QR of the sketch and
    scores row j as ``||a_j' R^-1||^2``, then multiplies everything by
    ``beta_safety`` so the results overestimate the exact scores with high
    probability.  A singular sketch is retried once with a fresh seed.
    ``embedding`` overrides the random transform (used to exercise the
    degenerate identity case).
    """
    Abar = augmented_matrix(A, Q)
    total_rows = Abar.shape[0]
    if embedding is None and sketch_rows < min(min_oversample * A.cols, total_rows):
        raise ValueError(
            f"sketch_rows={sketch_rows} below {min_oversample} x cols "
            f"(={min_oversample * A.cols}) and below the row count {total_rows}"
        )
    last_error: Exception | None = None
    for attempt in range(2):
        S = embedding
        if S is None:
            attempt_seed = seed if attempt == 0 else _derived_seed(seed, attempt)
            S = sparse_embedding(total_rows, sketch_rows, attempt_seed)
        sketch = apply_sparse_embedding(S, Abar)
        R = np.linalg.qr(sketch, mode="r")
        if np.min(np.abs(np.diag(R))) < 1e-12 * max(np.linalg.norm(sketch), 1e-300):
            last_error = ValueError("sketch produced a singular R factor")
            if embedding is not None:
                break
            continue
        W = scipy.linalg.solve_triangular(
            R, A.entries.T, trans="T", lower=False, check_finite=False
        )
        row_tau = np.einsum("ij,ij->j", W, W)
        tau = beta_safety * row_tau.reshape(A.n_blocks, A.block_rows).sum(axis=1)
        beta_bound = beta_safety**2 * (1.0 + eps_sketch) / (1.0 - eps_sketch)
        return LeverageScores(tau=tau, is_approximate=True, beta_bound=beta_bound)
    raise last_error  # type: ignore[misc]


def sampling_size_leverage_raw(sum_tau: float, d: int, eps: float, delta: float) -> float:
    """Budget that certifies the two-sided spectral condition for leverage sampling."""
    _check_eps_delta(eps, delta)
    if sum_tau <= 0:
        raise ValueError("sum_tau must be positive")
    return 4.0 * sum_tau * math.log(4.0 * d / delta) / eps**2


def sampling_size_leverage(sum_tau: float, d: int, eps: float, delta: float) -> int:
    return math.ceil(sampling_size_leverage_raw(sum_tau, d, eps, delta))


def sampling_size_block_norms_raw(sr_A: float, d: int, eps: float, delta: float) -> float:
    """Budget that certifies the spectral-norm condition for norm-squares sampling."""
    _check_eps_delta(eps, delta)
    if sr_A < 1.0:
        raise ValueError("stable rank must be >= 1")
    return 4.0 * sr_A * math.log(min(4.0 * sr_A, float(d)) / delta) / eps**2


def sampling_size_block_norms(sr_A: float, d: int, eps: float, delta: float) -> int:
    return math.ceil(sampling_size_block_norms_raw(sr_A, d, eps, delta))


def sampling_size_uniform_raw(
    A: BlockedMatrix, d: int, eps: float, delta: float
) -> float:
    """Budget for uniform sampling; scales with n under block-norm non-uniformity."""
    _check_eps_delta(eps, delta)
    max_block = float(A.block_spectral_norms_sq().max())
    spectral = float(np.linalg.norm(A.entries, 2) ** 2)
    if spectral == 0.0:
        raise ValueError("all blocks are zero")
    return 4.0 * A.n_blocks * (max_block / spectral) * math.log(d / delta) / eps**2


def sampling_size_uniform(A: BlockedMatrix, d: int, eps: float, delta: float) -> int:
    return math.ceil(sampling_size_uniform_raw(A, d, eps, delta))


def _check_eps_delta(eps: float, delta: float) -> None:
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")


def sampling_plan(scheme: str, p: np.ndarray, budget_s: int, seed: int) -> SamplingPlan:
    """Turn a distribution and budget into inclusion probabilities q_i = min(s p_i, 1)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    p = np.asarray(p, dtype=float)
    q = np.minimum(budget_s * p, 1.0)
    return SamplingPlan(scheme=scheme, p=p, q=q, budget_s=budget_s, seed=seed)


def draw_block_sample(plan: SamplingPlan) -> BlockSample:
    """Keep each block independently with probability q_i, rescaled by 1/sqrt(q_i)."""
    rng = np.random.default_rng(plan.seed)
    kept = np.flatnonzero(rng.random(plan.n_blocks) < plan.q)
    if kept.size == 0:
        raise EmptySampleError("no block kept; retry with a larger budget or new seed")
    return BlockSample(
        kept_indices=kept, scale_factors=1.0 / np.sqrt(plan.q[kept])
    )


def _derived_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence((seed, attempt)).generate_state(1)[0])


def draw_block_sample_with_retry(plan: SamplingPlan, max_attempts: int = 10) -> BlockSample:
    """Draw, re-seeding deterministically on empty samples, up to ``max_attempts``."""
    for attempt in range(max_attempts):
        current = plan if attempt == 0 else replace(
            plan, seed=_derived_seed(plan.seed, attempt)
        )
        try:
            return draw_block_sample(current)
        except EmptySampleError:
            continue
    raise EmptySampleError(
        f"no block kept in {max_attempts} attempts; budget s={plan.budget_s} is too small"
    )


def sampled_rows(A: BlockedMatrix, sample: BlockSample) -> np.ndarray:
    """Materialize the kept, rescaled rows as a dense (kept * block_rows) x d matrix."""
    k = A.block_rows
    if k == 1:
        return A.entries[sample.kept_indices] * sample.scale_factors[:, None]
    row_idx = (sample.kept_indices[:, None] * k + np.arange(k)).ravel()
    scales = np.repeat(sample.scale_factors, k)
    return A.entries[row_idx] * scales[:, None]


def stable_rank(A: BlockedMatrix | np.ndarray) -> float:
    """Squared Frobenius norm over squared spectral norm."""
    entries = A.entries if isinstance(A, BlockedMatrix) else np.asarray(A, dtype=float)
    fro_sq = float(np.sum(entries**2))
    if fro_sq == 0.0:
        raise ValueError("matrix is zero")
    spectral_sq = float(np.linalg.norm(entries, 2) ** 2)
    return fro_sq / spectral_sq
