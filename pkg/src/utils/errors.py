"""
Exception hierarchy shared by every stage of the pipeline.

Each class carries the process exit code the CLI reports for it, so the
runner can map failures without knowing where they were raised.
"""


class SNNError(Exception):
    """Root of all framework errors."""

    exit_code = 1


class ConfigError(SNNError, ValueError):
    """Invalid configuration, model spec or training setup."""

    exit_code = 2


class DataIOError(SNNError, OSError):
    """Unreadable data path, missing file or checkpoint."""

    exit_code = 3


class MalformedFileError(DataIOError):
    """Raw event file does not follow its documented byte layout."""


class GeometryError(DataIOError):
    """Event coordinates fall outside the declared sensor geometry."""


class CorruptContainerError(DataIOError):
    """EVT container or weight blob failed a structural or checksum check."""


class DegenerateDurationError(SNNError, ValueError):
    exit_code = 2


class ShapeError(SNNError, ValueError):
    exit_code = 2


class NumericFault(SNNError, FloatingPointError):
    """Non-finite values where finite ones are required."""

    exit_code = 4


class GradCheckError(NumericFault):
    pass


class DegenerateBatchError(SNNError, ValueError):
    exit_code = 2


class UndefinedSparsityError(SNNError, ValueError):
    exit_code = 2


class MissingClassError(SNNError, ValueError):
    exit_code = 2


class AccountingError(SNNError, ValueError):
    exit_code = 2
