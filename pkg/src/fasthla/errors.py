"""Exception hierarchy shared across the package.

Every error raised by fasthla derives from FastHLAError so callers (and the
CLI exit-code mapping) can distinguish error classes without string matching.
"""


class FastHLAError(Exception):
    """Base class for all fasthla errors."""


class DomainError(FastHLAError):
    """An input value lies outside its documented domain."""


class EmptyTraceError(FastHLAError):
    """Power trace has fewer than two samples."""


class MalformedTraceError(FastHLAError):
    """Power trace timestamps are not strictly increasing."""


class DuplicateKnotError(FastHLAError):
    """Spline abscissae contain duplicates."""


class InsufficientDataError(FastHLAError):
    """Not enough data to fit, train, or optimize."""


class ExtrapolationError(FastHLAError):
    """Evaluation requested outside the interpolated hull."""


class UndefinedVarianceError(FastHLAError):
    """R^2 is undefined because the actuals have zero variance."""


class BlobParseError(FastHLAError):
    """Base class for model-blob deserialization failures."""


class BlobMagicError(BlobParseError):
    """Serialized model blob does not start with the expected magic."""


class BlobCountError(BlobParseError):
    """Serialized model blob declares an unexpected weight count."""


class BlobLengthError(BlobParseError):
    """Serialized model blob is truncated or has trailing bytes."""


class LogParseError(FastHLAError):
    """A JSONL transfer-log line could not be parsed."""


class InsufficientWindowError(FastHLAError):
    """Observed throughput window is too short for drop detection."""


class EmptyPlanError(FastHLAError):
    """A schedule was requested for an empty dataset."""


class UserLimitError(FastHLAError):
    """user_limit cannot accommodate one connection per file cluster."""


class ScenarioError(FastHLAError):
    """Simulator scenario parameters are invalid."""


class EmptyInputError(FastHLAError):
    """Pipeline input contained zero usable logs."""


class NoTrainableDataError(FastHLAError):
    """Every cluster was skipped; nothing to train on."""


class TransportError(FastHLAError):
    """An HTTP transport operation failed."""


class ConfigError(FastHLAError):
    """A configuration file is missing or malformed."""
