"""Ensemble MCMC samplers for Bayesian inverse problems with Gaussian priors.

Dimension-robust Metropolis-Hastings kernels (pCN, generalized pCN, the
affine-invariant walk move, FES, SAFES, SAFES-P) on discretized function
spaces, the benchmark inverse problems they are compared on, and the
convergence diagnostics used for those comparisons.
"""

from .errors import BuildError, ConfigurationError, EnsmcError, NumericalError
from .fields import (
    DeviationMatrix,
    Field,
    GaussianMeasure,
    GridSpec,
    LowRankJump,
    assemble_precision,
    deviation_matrix,
    i_c,
    quadratic_moment_mc,
)

__all__ = [
    "BuildError",
    "ConfigurationError",
    "EnsmcError",
    "NumericalError",
    "DeviationMatrix",
    "Field",
    "GaussianMeasure",
    "GridSpec",
    "LowRankJump",
    "assemble_precision",
    "deviation_matrix",
    "i_c",
    "quadratic_moment_mc",
]
