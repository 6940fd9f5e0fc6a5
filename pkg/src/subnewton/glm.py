"""Ridge GLM problems and their factored Hessians.

The objective is ``F(w) = sum_i psi(x_i' w, y_i) + lam * ||w||^2``.  With
this convention the ridge term contributes ``2 * lam * w`` to the gradient
and ``2 * lam * I`` to the Hessian.  The data part of the Hessian is kept
in factored form: a stack of row blocks ``sqrt(psi''(x_i' w, y_i)) x_i'``
whose Gram matrix is the curvature of the loss sum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "LOGISTIC",
    "SQUARED",
    "BlockedMatrix",
    "GlmProblem",
    "HessianFactorization",
    "DatasetFormatError",
    "Dataset",
    "psi_derivatives",
    "objective",
    "gradient",
    "hessian_factorization",
    "load_dataset",
    "save_dataset",
    "preprocess",
]

LOGISTIC = "logistic"
SQUARED = "squared"


class DatasetFormatError(ValueError):
    """A dataset file failed to parse."""


@dataclass(frozen=True)
class BlockedMatrix:
    """Row-blocked matrix: ``n_blocks`` consecutive blocks of ``block_rows`` rows.

    Block ``i`` occupies rows ``i * block_rows`` through
    ``(i + 1) * block_rows - 1`` of ``entries``.
    """

    entries: np.ndarray
    block_rows: int = 1

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2:
            raise ValueError("entries must be a matrix")
        if self.block_rows < 1:
            raise ValueError("block_rows must be >= 1")
        if entries.shape[0] % self.block_rows != 0:
            raise ValueError(
                f"{entries.shape[0]} rows do not divide into blocks of {self.block_rows}"
            )

    @property
    def n_blocks(self) -> int:
        return self.entries.shape[0] // self.block_rows

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def block(self, i: int) -> np.ndarray:
        k = self.block_rows
        return self.entries[i * k : (i + 1) * k]

    def block_norms_sq(self) -> np.ndarray:
        """Squared Frobenius norm of every block, in one pass."""
        row_sq = np.einsum("ij,ij->i", self.entries, self.entries)
        return row_sq.reshape(self.n_blocks, self.block_rows).sum(axis=1)

    def block_spectral_norms_sq(self) -> np.ndarray:
        """Squared spectral norm of every block (equals Frobenius for 1-row blocks)."""
        if self.block_rows == 1:
            return self.block_norms_sq()
        out = np.empty(self.n_blocks)
        for i in range(self.n_blocks):
            out[i] = np.linalg.svd(self.block(i), compute_uv=False)[0] ** 2
        return out

    def gram(self) -> np.ndarray:
        return self.entries.T @ self.entries


@dataclass(frozen=True)
class GlmProblem:
    """Dataset plus loss and ridge parameter.

    ``y`` entries must lie in {-1, +1} for the logistic loss.  Instances are
    immutable; all evaluations below are pure and thread-safe.
    """

    X: np.ndarray
    y: np.ndarray
    lam: float
    loss: str = LOGISTIC

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"X must be a nonempty matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per row of X")
        if self.lam < 0:
            raise ValueError("ridge parameter must be nonnegative")
        if self.loss not in (LOGISTIC, SQUARED):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss == LOGISTIC and not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("logistic labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class HessianFactorization:
    """Factored Hessian: ``A.gram() + Q`` equals the analytic Hessian."""

    A: BlockedMatrix
    Q: np.ndarray

    def matrix(self) -> np.ndarray:
        return self.A.gram() + self.Q


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def psi_derivatives(u, y, loss: str = LOGISTIC):
    """Loss value and first two derivatives in the margin variable u.

    Accepts scalars or arrays (broadcast together).  The logistic branch
    uses exp-shifted formulas, so it stays finite for |u| up to 700.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if loss == LOGISTIC:
        z = -u * y
        value = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(-np.abs(z))))
        s = _sigmoid(z)
        first = -y * s
        second = s * (1.0 - s)
    elif loss == SQUARED:
        r = u - y
        value = 0.5 * r * r
        first = r
        second = np.ones_like(r)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    if u.ndim == 0 and y.ndim == 0:
        return float(value), float(first), float(second)
    return value, first, second


def objective(p: GlmProblem, w: np.ndarray) -> float:
    """F(w) = sum_i psi(x_i' w, y_i) + lam ||w||^2."""
    w = np.asarray(w, dtype=float)
    value, _, _ = psi_derivatives(p.X @ w, p.y, p.loss)
    total = float(np.sum(value) + p.lam * (w @ w))
    if not np.isfinite(total):
        raise FloatingPointError("objective overflowed")
    return total


def gradient(p: GlmProblem, w: np.ndarray) -> np.ndarray:
    """grad F(w) = sum_i psi'(x_i' w, y_i) x_i + 2 lam w."""
    w = np.asarray(w, dtype=float)
    _, first, _ = psi_derivatives(p.X @ w, p.y, p.loss)
    return p.X.T @ first + 2.0 * p.lam * w


def hessian_factorization(p: GlmProblem, w: np.ndarray) -> HessianFactorization:
    """Factor the Hessian at w as a row-block stack plus ridge term.

    Block i is ``sqrt(psi''(x_i' w, y_i)) x_i'`` (one row per datum) and the
    ridge contributes ``Q = 2 lam I``.
    """
    w = np.asarray(w, dtype=float)
    _, _, second = psi_derivatives(p.X @ w, p.y, p.loss)
    A = BlockedMatrix(np.sqrt(second)[:, None] * p.X, block_rows=1)
    Q = 2.0 * p.lam * np.eye(p.d)
    return HessianFactorization(A, Q)


@dataclass(frozen=True)
class Dataset:
    """Loaded design matrix and labels, with the label remapping applied."""

    X: np.ndarray
    y: np.ndarray
    label_mapping: dict = field(default_factory=dict)


def _remap_labels(raw: np.ndarray, path: str) -> tuple[np.ndarray, dict]:
    values = set(np.unique(raw).tolist())
    if values <= {-1.0, 1.0}:
        return raw, {}
    if values <= {0.0, 1.0}:
        return np.where(raw == 0.0, -1.0, 1.0), {0: -1, 1: 1}
    if values <= {1.0, 2.0}:
        return np.where(raw == 1.0, -1.0, 1.0), {1: -1, 2: 1}
    raise DatasetFormatError(
        f"{path}: labels {sorted(values)} are not one of {{-1,+1}}, {{0,1}}, {{1,2}}"
    )


def load_dataset(
    path: str,
    fmt: str = "libsvm",
    label_position: str = "last",
    n_features: Optional[int] = None,
) -> Dataset:
    """Read a dense design matrix and +/-1 labels from a text file.

    ``libsvm`` lines look like ``<label> <index>:<value> ...`` with 1-based
    indices; absent features are zero and the matrix is densified.  ``csv``
    rows are numeric with the label in the first or last column.  Labels in
    {0,1} or {1,2} are remapped to {-1,+1} (smaller value to -1) and the
    mapping is recorded on the returned dataset.
    """
    if fmt == "libsvm":
        rows, labels = [], []
        max_index = n_features or 0
        with open(path) as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split()
                try:
                    labels.append(float(parts[0]))
                except ValueError as exc:
                    raise DatasetFormatError(
                        f"{path}: line {lineno}: bad label {parts[0]!r}"
                    ) from exc
                row = {}
                for item in parts[1:]:
                    try:
                        idx_str, val_str = item.split(":")
                        idx = int(idx_str)
                        val = float(val_str)
                    except ValueError as exc:
                        raise DatasetFormatError(
                            f"{path}: line {lineno}: bad feature {item!r}"
                        ) from exc
                    if idx < 1:
                        raise DatasetFormatError(
                            f"{path}: line {lineno}: feature index {idx} is not 1-based"
                        )
                    row[idx - 1] = val
                    max_index = max(max_index, idx)
                rows.append(row)
        if not rows:
            raise DatasetFormatError(f"{path}: empty dataset")
        X = np.zeros((len(rows), max_index))
        for i, row in enumerate(rows):
            for j, val in row.items():
                X[i, j] = val
        raw = np.asarray(labels)
    elif fmt == "csv":
        if label_position not in ("first", "last"):
            raise ValueError("label_position must be 'first' or 'last'")
        data = []
        width = None
        with open(path) as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                fields = line.split(",")
                if width is None:
                    width = len(fields)
                elif len(fields) != width:
                    raise DatasetFormatError(
                        f"{path}: line {lineno}: expected {width} columns, got {len(fields)}"
                    )
                try:
                    data.append([float(f) for f in fields])
                except ValueError as exc:
                    raise DatasetFormatError(
                        f"{path}: line {lineno}: non-numeric field"
                    ) from exc
        if not data:
            raise DatasetFormatError(f"{path}: empty dataset")
        table = np.asarray(data)
        if label_position == "last":
            X, raw = table[:, :-1], table[:, -1]
        else:
            X, raw = table[:, 1:], table[:, 0]
    else:
        raise ValueError(f"unknown format {fmt!r}")
    y, mapping = _remap_labels(raw, path)
    return Dataset(X=X, y=y, label_mapping=mapping)


def save_dataset(
    path: str,
    X: np.ndarray,
    y: np.ndarray,
    fmt: str = "libsvm",
    label_position: str = "last",
) -> None:
    """Write a dataset in a form :func:`load_dataset` reads back bit-identically."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    with open(path, "w") as handle:
        if fmt == "libsvm":
            for i in range(X.shape[0]):
                feats = " ".join(
                    f"{j + 1}:{X[i, j]!r}" for j in range(X.shape[1]) if X[i, j] != 0.0
                )
                handle.write(f"{y[i]:g} {feats}".rstrip() + "\n")
        elif fmt == "csv":
            for i in range(X.shape[0]):
                fields = [repr(v) for v in X[i]]
                if label_position == "last":
                    fields.append(f"{y[i]:g}")
                else:
                    fields.insert(0, f"{y[i]:g}")
                handle.write(",".join(fields) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")


def preprocess(
    X: np.ndarray,
    normalize_columns: bool = True,
    add_intercept: bool = True,
) -> np.ndarray:
    """Scale nonzero columns to unit norm, then optionally append a ones column.

    Zero columns are left unscaled with a warning.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("X must be nonempty")
    out = X.copy()
    if normalize_columns:
        norms = np.linalg.norm(out, axis=0)
        zero = norms == 0.0
        if np.any(zero):
            warnings.warn(
                f"{int(np.sum(zero))} zero column(s) left unscaled", stacklevel=2
            )
        out[:, ~zero] /= norms[~zero]
    if add_intercept:
        out = np.hstack([out, np.ones((out.shape[0], 1))])
    return out
