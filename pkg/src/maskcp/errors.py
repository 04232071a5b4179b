"""Exception types shared across the package.

``MaskcpUserError`` subclasses signal bad inputs (configs, CSVs, invalid
arguments); anything else escaping the library is an internal error. The
CLI maps the former to exit code 2 and the latter to exit code 1.
"""


class MaskcpError(Exception):
    """Base class for all package errors."""


class MaskcpUserError(MaskcpError):
    """Errors caused by invalid user input rather than library bugs."""


class DimensionError(MaskcpUserError):
    """Operands disagree on the covariate dimension."""


class MaskConsistencyError(MaskcpUserError):
    """Values and mask disagree about which entries are missing."""


class MaskOrderError(MaskcpUserError):
    """A mask-order precondition (m ⪯ target) was violated."""


class EmptyDistributionError(MaskcpUserError):
    """Quantile requested from a distribution with no mass."""


class InsufficientDataError(MaskcpUserError):
    """Too few data points for the requested operation."""


class ConfigurationError(MaskcpUserError):
    """Invalid configuration values."""


class DataError(MaskcpUserError):
    """Dataset contents violate an operation's requirements."""


class DomainError(MaskcpUserError):
    """Argument outside the supported domain (e.g. unsupported mask)."""


class CalibrationError(MaskcpError):
    """Amputation-rate calibration failed to converge.

    Carries diagnostics describing the failed bracket/target.
    """

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = dict(diagnostics)


class UnreachableGroupError(MaskcpError):
    """Rejection sampling exhausted its draw budget for a group."""
