"""Exception hierarchy shared across the pipeline.

Three broad families map onto the CLI exit codes: configuration problems
(exit 2), data problems (exit 3), and numeric/solver problems (exit 4).
"""


class EmbedClassError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EmbedClassError):
    """Bad or missing run configuration (exit code 2)."""


class DataError(EmbedClassError):
    """Malformed or inconsistent input data (exit code 3)."""


class ManifestParseError(DataError):
    """A manifest row could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(DataError):
    """Label schema violated (unknown class, wrong cardinality, ...)."""


class ValidationError(DataError):
    """Dataset-level invariant violated (duplicate ids, unknown split ids, ...)."""


class DecodeError(DataError):
    """An image file exists but could not be decoded."""


class NumericError(EmbedClassError):
    """Numeric failure: degenerate labels, non-finite values, ... (exit code 4)."""


class DegenerateLabelsError(NumericError):
    """A binary subproblem saw only one class."""


class UndefinedMetricError(NumericError):
    """Metric undefined for the given inputs (e.g. AUC with one class)."""
