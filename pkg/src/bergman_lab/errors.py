"""Exception types shared across the package.

The CLI maps these onto exit codes (see ``bergman_lab.cli``).
"""


class BergmanLabError(Exception):
    """Base class for all package errors."""


class DomainError(BergmanLabError, ValueError):
    """A parameter or point lies outside the domain an operation accepts."""


class InternalInconsistencyError(BergmanLabError, ArithmeticError):
    """A quantity that is nonnegative by construction came out negative."""


class ResolutionError(BergmanLabError):
    """Quadrature or discretization failed to resolve the requested quantity."""


class PartitionQualityError(ResolutionError):
    """Too many quadrature nodes fell outside the cell partition."""


class NonContractiveError(BergmanLabError):
    """A Neumann iteration stopped contracting.

    ``ratio`` carries the last measured residual ratio.
    """

    def __init__(self, message, ratio):
        super().__init__(message)
        self.ratio = ratio


class ConfigError(BergmanLabError, ValueError):
    """Configuration file or CLI arguments are invalid."""


class FramingError(BergmanLabError, ValueError):
    """A binary cache file is truncated or has a bad header."""


class TruncationWarning(UserWarning):
    """A truncated series may not be converged at the evaluated arguments."""
