"""Error taxonomy shared by the library and the command line tools.

Exit-code mapping used by the CLI: usage errors exit 2, data errors exit 3,
numeric failures exit 4. Programmer contract violations stay plain
ValueError/TypeError and are not part of the taxonomy.
"""


class FastHashError(Exception):
    """Base class for run-level failures with a CLI exit code."""

    exit_code = 1


class UsageError(FastHashError):
    """Bad command line arguments or option combinations."""

    exit_code = 2


class DataError(FastHashError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class FileFormatError(DataError):
    """A data file does not match its declared binary or text layout."""


class ConfigError(DataError):
    """Unknown key, bad value, or missing entry in a config file."""


class ModelFormatError(DataError):
    """Model file header is not recognizable."""


class ModelVersionError(DataError):
    """Model file has a well-formed header but an unsupported version."""


class ModelTruncatedError(DataError):
    """Model file ends before the declared payload is complete."""


class NumericError(FastHashError):
    """Numeric failure (non-finite values, optimizer breakdown)."""

    exit_code = 4


class SubmodularityError(NumericError, ValueError):
    """A pairwise energy term has a positive coefficient.

    Such terms cannot be represented as an s-t cut, so the energy is
    rejected instead of being silently clamped.
    """
