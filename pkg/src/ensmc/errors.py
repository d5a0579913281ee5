"""Exception hierarchy shared across the package.

Configuration problems and numerical failures are kept distinct so the
command line can map them to different exit codes.
"""


class EnsmcError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EnsmcError):
    """Invalid configuration: bad keys, out-of-range values, incompatible pairings."""


class NumericalError(EnsmcError):
    """Numerical failure: non-finite likelihoods, singular systems, breakdown guards."""


class BuildError(NumericalError):
    """Operator assembly produced a matrix that is not positive definite."""
