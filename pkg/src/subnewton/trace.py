"""Per-iteration run records shared by all optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["IterationRecord", "RunTrace"]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    wall_time: float
    objective: float
    grad_norm: float
    rel_solution_error: Optional[float]
    kept_blocks: int
    solver_iters: int
    solver_residual: float
    eps_c1: Optional[float] = None
    eps_c2: Optional[float] = None


@dataclass
class RunTrace:
    """Append-only iteration log; iterations strictly increase, time never decreases."""

    records: list[IterationRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, record: IterationRecord) -> None:
        if self.records:
            last = self.records[-1]
            if record.iteration <= last.iteration:
                raise ValueError("iteration numbers must strictly increase")
            if record.wall_time < last.wall_time:
                raise ValueError("wall time must be non-decreasing")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iteration for r in self.records])

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    @property
    def rel_errors(self) -> np.ndarray:
        """Relative solution errors with NaN where no reference was available."""
        return np.array(
            [np.nan if r.rel_solution_error is None else r.rel_solution_error
             for r in self.records]
        )

    @property
    def final_record(self) -> IterationRecord:
        return self.records[-1]
