"""
Exception hierarchy for helprank.

Every error raised on purpose by the pipeline derives from HelprankError, which is a
ValueError so callers that only know about bad values still catch it.
"""


class HelprankError(ValueError):
    """Base class for all domain errors."""

    def __init__(self, message="", **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self):
        """Machine-readable form used by the CLI on standard error."""
        payload = {"error": type(self).__name__, "message": self.message}
        for key, value in self.context.items():
            payload[key] = value if isinstance(value, (int, float, str, bool, type(None))) else str(value)
        return payload


# --- corpus ingestion -------------------------------------------------------

class ParseError(HelprankError):
    def __init__(self, message="malformed review line", line_number=None):
        super().__init__(message, line_number=line_number)
        self.line_number = line_number


class MissingField(HelprankError):
    def __init__(self, field, line_number=None):
        super().__init__(f"missing required field '{field}'", field=field, line_number=line_number)
        self.field = field


class InvalidVotes(HelprankError):
    pass


class InvalidRating(HelprankError):
    pass


class UndefinedRatio(HelprankError):
    pass


class EmptyCorpus(HelprankError):
    pass


class TooSmallToSplit(HelprankError):
    pass


class ProvenanceError(HelprankError):
    """Test-split text reached a training-only stage."""


# --- numerics / models ------------------------------------------------------

class ShapeError(HelprankError):
    pass


class NumericalError(HelprankError):
    pass


class EmptySequence(HelprankError):
    pass


class TraceError(HelprankError):
    pass


class DegenerateLabels(HelprankError):
    pass


class AlignmentError(HelprankError):
    pass


class CorruptCheckpoint(HelprankError):
    pass


class CorruptTable(CorruptCheckpoint):
    pass


# --- experiments / configuration -------------------------------------------

class DivergenceError(HelprankError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}",
                         epoch=epoch, batch=batch)
        self.epoch = epoch
        self.batch = batch


class EmptySplit(HelprankError):
    pass


class MissingCategory(HelprankError):
    pass


class ConfigError(HelprankError):
    def __init__(self, key, message=None):
        super().__init__(message or f"unknown configuration key '{key}'", key=key)
        self.key = key
