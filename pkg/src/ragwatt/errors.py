"""Exception hierarchy shared across the package.

Two families matter for the command line: ValidationError covers bad
inputs, files and configuration (exit code 1), ExecutionError covers
failures while actually running a pipeline stage (exit code 2).
"""

__all__ = [
    "RagwattError",
    "ValidationError",
    "SchemaError",
    "SchemaVersionError",
    "ConfigurationError",
    "MeasurementError",
    "DatasetError",
    "StatisticsError",
    "UndefinedSimilarityError",
    "ExecutionError",
    "StageError",
    "RetrievalError",
    "VerificationFormatError",
]


class RagwattError(Exception):
    """Base class for all package errors."""


class ValidationError(RagwattError):
    """Invalid input data, file content or configuration."""


class SchemaError(ValidationError):
    """A record or structure does not match the expected shape."""


class SchemaVersionError(SchemaError):
    """A persisted file carries a schema version this code cannot read."""

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(
            f"unsupported schema version {found!r}; this build reads version {expected!r}"
        )


class ConfigurationError(ValidationError):
    """Missing or inconsistent configuration (profiles, drivers, vocabularies)."""


class MeasurementError(ValidationError):
    """A measured or derived quantity is out of its valid domain."""


class DatasetError(ValidationError):
    """A question dataset or annotation file failed validation."""


class StatisticsError(ValidationError):
    """A statistic is undefined for the given input (e.g. empty sample)."""


class UndefinedSimilarityError(ValidationError):
    """Cosine similarity is undefined (zero-magnitude vector)."""


class ExecutionError(RagwattError):
    """Failure while executing a pipeline stage or experiment."""


class StageError(ExecutionError):
    """A pipeline stage failed; carries the stage kind when known."""

    def __init__(self, message, *, stage_kind=None, stage_index=None):
        self.stage_kind = stage_kind
        self.stage_index = stage_index
        super().__init__(message)


class RetrievalError(StageError):
    """Retrieval cannot run (e.g. empty vector store)."""


class VerificationFormatError(StageError):
    """A verification model reply could not be parsed into verdicts."""
