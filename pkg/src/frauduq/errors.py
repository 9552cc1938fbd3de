"""Exception hierarchy shared across the package.

Each class maps to a distinct CLI exit code so callers can tell
configuration problems from data problems from numeric blow-ups.
"""


class FraudUqError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(FraudUqError):
    """Invalid configuration or operation arguments, rejected before any work."""

    exit_code = 2


class DataError(FraudUqError):
    """Bad input data: ingestion, fitting, transforming, or empty inputs."""

    exit_code = 3


class ShapeError(DataError):
    """Dimension mismatch between arrays, models, or tables."""


class FormatError(DataError):
    """A serialized artifact (model, state, dump) could not be parsed."""


class NumericError(FraudUqError):
    """Non-finite values where finite numbers are required."""

    exit_code = 4
