"""Exception types shared across the package."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EngineError):
    """A run configuration is malformed or self-contradictory (CLI exit code 2)."""


class InvalidConfigError(ConfigError):
    """A dataset generator parameter is out of range."""


class ZeroNormError(EngineError):
    """A vector with (near-)zero norm reached an operation that must normalize it."""


class DimensionMismatchError(EngineError):
    """Ragged or incompatible vector dimensions."""


class ShapeMismatchError(EngineError):
    """Array shapes do not line up (gradients, parameters, batches)."""


class KOutOfRangeError(EngineError):
    """Top-K request with K < 1 or K > dimension."""


class KTooLargeError(EngineError):
    """Retrieval/clustering k exceeds what the point set supports."""


class ParseError(EngineError):
    """CSV parsing failure; carries 1-based row and 0-based column when known."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class EmptyFileError(EngineError):
    """An input file contains no data rows."""


class NotEnoughClassesError(EngineError):
    """Batch construction asked for more classes than the split provides."""


class NoValidTripletError(EngineError):
    """No anchor in the batch admits a (positive, negative) pair."""


class LabelOutOfRangeError(EngineError):
    """A class label falls outside the configured class count."""


class LengthMismatchError(EngineError):
    """Two per-point sequences differ in length."""


class CorruptCheckpointError(EngineError):
    """A checkpoint file is unreadable or structurally invalid."""


class TrainingAbortError(EngineError):
    """The training loop aborted (e.g. non-finite loss); CLI exit code 3."""
