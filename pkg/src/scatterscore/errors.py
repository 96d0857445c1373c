"""Exception hierarchy shared by every stage of the pipeline."""


class ScatterScoreError(Exception):
    """Base class for all toolkit errors."""


# audio / dsp
class NotFound(ScatterScoreError, FileNotFoundError):
    pass


class UnsupportedFormat(ScatterScoreError, ValueError):
    pass


class CorruptFile(ScatterScoreError, ValueError):
    pass


class InputTooShort(ScatterScoreError, ValueError):
    pass


# scattering / features
class InvalidConfig(ScatterScoreError, ValueError):
    pass


class LengthMismatch(ScatterScoreError, ValueError):
    pass


class FrameMismatch(ScatterScoreError, ValueError):
    pass


class OutOfRange(ScatterScoreError, ValueError):
    pass


class FeatureIOError(ScatterScoreError, OSError):
    pass


class VersionMismatch(ScatterScoreError, ValueError):
    pass


# nn / training
class ShapeMismatch(ScatterScoreError, ValueError):
    pass


class NonFiniteError(ScatterScoreError, FloatingPointError):
    pass


class MissingForwardState(ScatterScoreError, RuntimeError):
    pass


class EmptyPrediction(ScatterScoreError, ValueError):
    pass


class DatasetTooSmall(ScatterScoreError, ValueError):
    pass


class NonFiniteLoss(ScatterScoreError, FloatingPointError):
    def __init__(self, utterance_id, value):
        super().__init__(f"non-finite loss {value!r} on utterance {utterance_id!r}")
        self.utterance_id = utterance_id
        self.value = value


# metrics
class TooFewPoints(ScatterScoreError, ValueError):
    pass


class ZeroVariance(ScatterScoreError, ValueError):
    pass


# data
class SchemaError(ScatterScoreError, ValueError):
    pass


class RangeError(ScatterScoreError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDataset(ScatterScoreError, ValueError):
    pass


class MissingFeatures(ScatterScoreError, FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(f"missing features for {len(self.missing)} utterance(s): {shown}{more}")


class NoOverlap(ScatterScoreError, ValueError):
    pass
