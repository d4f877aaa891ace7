"""Error hierarchy shared by every module.

Each class carries the CLI exit code it maps to: usage errors exit 1,
data/format errors exit 2, numeric failures exit 3.
"""


class KPError(Exception):
    exit_code = 1


class UsageError(KPError):
    """Caller misused an interface (bad flag, wrong kind, invalid theta)."""

    exit_code = 1


class DimensionError(UsageError):
    """Operand shapes do not agree."""


class DataError(KPError):
    """Input data violates a contract (unknown label, missing file, bad shape)."""

    exit_code = 2


class FormatError(DataError):
    """A file does not parse as its documented format."""


class NumericError(KPError):
    """Numeric failure during training or inference."""

    exit_code = 3


class DegenerateInputError(NumericError):
    """A zero-norm feature vector reached cosine similarity."""


class TrainingDivergedError(NumericError):
    """Loss became NaN/Inf; carries diagnostics of the failing batch."""
