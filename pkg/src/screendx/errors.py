"""Exception types shared across the pipeline."""


class ScreenDxError(Exception):
    """Base class for all pipeline errors."""


# geometry / imaging
class DegenerateConfiguration(ScreenDxError):
    pass


class AtInfinity(ScreenDxError):
    pass


class NonConvexInput(ScreenDxError):
    pass


class OutOfBounds(ScreenDxError):
    pass


class DimensionMismatch(ScreenDxError):
    pass


class ImageTooSmall(ScreenDxError):
    pass


# capture sim
class SlotIndexOutOfRange(ScreenDxError):
    pass


class EmptyInput(ScreenDxError):
    pass


# screen pipeline
class NoScreenFound(ScreenDxError):
    pass


class NoRegionFound(ScreenDxError):
    pass


# alignment
class InsufficientMatches(ScreenDxError):
    pass


class NoConsensus(ScreenDxError):
    pass


# routing / diagnosis
class ZeroVector(ScreenDxError):
    pass


class LengthMismatch(ScreenDxError):
    pass


class EmptyLabelSet(ScreenDxError):
    pass


class UnknownModality(ScreenDxError):
    pass


class LabelMismatch(ScreenDxError):
    pass


# report assistant
class OutOfRangeProbability(ScreenDxError):
    pass


class MissingSection(ScreenDxError):
    def __init__(self, section):
        self.section = section
        super().__init__(f"missing section marker: {section}")


# metrics
class SingleClass(ScreenDxError):
    pass


class TooFewPairs(ScreenDxError):
    pass


class StatUndefinedTooOften(ScreenDxError):
    pass


class EmptyCandidate(ScreenDxError):
    pass


# backend protocol
class SchemaViolation(ScreenDxError):
    def __init__(self, path, message=""):
        self.path = path
        super().__init__(f"schema violation at {path}: {message}" if message
                         else f"schema violation at {path}")


class BackendError(ScreenDxError):
    """Error reported by (or while reaching) an inference backend."""

    CODES = ("bad_request", "model_not_found", "inference_failed", "timeout")

    def __init__(self, code, message=""):
        if code not in self.CODES:
            raise ValueError(f"unknown backend error code: {code}")
        self.code = code
        self.message = message
        super().__init__(f"[{code}] {message}")


# pipeline / config
class ConfigInvalid(ScreenDxError):
    pass
