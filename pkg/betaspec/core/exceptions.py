"""Error hierarchy. Each family maps to one CLI exit code."""
from typing import Any, Optional


class BetaSpecError(Exception):
    """Base class for all package errors"""
    exit_code = 1


class NegativeDivergence(BetaSpecError):
    """A divergence evaluated below zero by more than rounding"""


# Input / configuration errors (exit 2)

class ParseError(BetaSpecError):
    """Malformed or missing input file"""
    exit_code = 2


class ConfigurationError(BetaSpecError):
    """Invalid parameter or configuration value"""
    exit_code = 2


class InvalidSpectrum(BetaSpecError):
    """Spectrum values violate Hermitian or real-process symmetry"""
    exit_code = 2


class FilterBankError(BetaSpecError):
    """Filter bank violates stability, reachability or rank conditions"""
    exit_code = 2


class UnstableA(FilterBankError):
    pass


class NotReachable(FilterBankError):
    pass


class RankDeficientB(FilterBankError):
    pass


class UnstableModel(BetaSpecError):
    """AR polynomial has roots on or outside the unit circle"""
    exit_code = 2


class NonPositiveInput(BetaSpecError):
    exit_code = 2


class TooFewSamples(BetaSpecError):
    exit_code = 2


# Shape errors (exit 3)

class DimensionError(BetaSpecError):
    """Incompatible matrix or spectrum dimensions"""
    exit_code = 3


class GridMismatch(DimensionError):
    """Spectra sampled on different frequency grids"""


# Positivity errors (exit 4)

class NotPositiveDefinite(BetaSpecError):
    """Matrix (or spectrum value) is not positive definite

    When raised on a stack of matrices, `index` is the flat index of the
    first offending element (the grid index for spectra).
    """
    exit_code = 4

    def __init__(self, message: str, index: Optional[int] = None):
        if index is not None:
            message = f"{message} (at grid index {index})"
        super().__init__(message)
        self.index = index


class NotAdmissible(BetaSpecError):
    """Multiplier leaves the admissible set"""
    exit_code = 4


# Solver errors (exit 5)

class SolverError(BetaSpecError):
    """Newton solver failure; `trace` holds the partial iteration trace"""
    exit_code = 5

    def __init__(self, message: str, trace: Any = None):
        super().__init__(message)
        self.trace = trace


class MaxIterationsExceeded(SolverError):
    pass


class SingularHessian(SolverError):
    pass


class LineSearchFailed(SolverError):
    pass


class InitialPointInadmissible(SolverError):
    pass


# Feasibility errors (exit 6)

class NotInRangeGamma(BetaSpecError):
    """Covariance is not a state covariance of the filter bank"""
    exit_code = 6
