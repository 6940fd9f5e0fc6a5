"""Sub-sampled Newton methods with non-uniform Hessian sampling.

The package provides:

- dense linear-algebra kernels and a one-nonzero-per-row sketching
  transform (:mod:`subnewton.linalg`),
- ridge GLM problem definitions with the Hessian factored as a stack of
  per-datum row blocks (:mod:`subnewton.glm`),
- the three block-sampling schemes (uniform, block norm squares, block
  partial leverage scores) with their sampling-size formulas
  (:mod:`subnewton.sampling`),
- the sub-sampled Newton main loop with inexact subproblem solvers
  (:mod:`subnewton.optimizer`),
- baseline optimizers: exact Newton, L-BFGS, GD, AGD
  (:mod:`subnewton.baselines`),
- diagnostics that certify the Hessian-approximation conditions and the
  local error recursion (:mod:`subnewton.diagnostics`),
- a benchmark CLI (:mod:`subnewton.cli`).
"""

from subnewton.glm import GlmProblem, BlockedMatrix, HessianFactorization
from subnewton.optimizer import SsnConfig, ssn_run
from subnewton.baselines import BaselineConfig, newton_run, lbfgs_run, gd_run, agd_run
from subnewton.trace import RunTrace

__all__ = [
    "GlmProblem",
    "BlockedMatrix",
    "HessianFactorization",
    "SsnConfig",
    "ssn_run",
    "BaselineConfig",
    "newton_run",
    "lbfgs_run",
    "gd_run",
    "agd_run",
    "RunTrace",
]

__version__ = "0.1.0"
