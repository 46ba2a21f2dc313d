"""Exception and warning types raised across paeekit."""
from pathlib import Path
from typing import Optional


class PaeeError(Exception):
    """Base class for every error raised by paeekit."""
    pass


class ConfigInvalid(PaeeError):
    """Raised when a configuration file or override fails validation."""
    pass


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


class DataError(PaeeError):
    pass


class MalformedRow(DataError):
    """A CSV row could not be parsed. ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotoneTimestamps(DataError):
    pass


class EmptyFile(DataError):
    pass


class NegativeGasFlow(DataError):
    pass


class MissingFile(DataError):
    def __init__(self, path: Path):
        self.path = Path(path)
        super().__init__(f"missing file: {self.path}")


class DuplicateSubjectId(DataError):
    pass


class ShortRest(DataError):
    pass


class NoOverlap(DataError):
    pass


class NoTraces(DataError):
    """A report was requested from a directory holding no trace files."""
    pass


# ---------------------------------------------------------------------------
# dsp / energetics / features
# ---------------------------------------------------------------------------


class SignalError(PaeeError):
    pass


class CutoffOutOfRange(SignalError):
    pass


class SignalTooShort(SignalError):
    pass


class EmptyBin(SignalError):
    pass


class TooFewBreaths(SignalError):
    pass


class BadWindow(SignalError):
    pass


class EnergeticsError(PaeeError):
    pass


class RestTooShort(EnergeticsError):
    pass


class LengthMismatch(PaeeError):
    """Paired sequences have different lengths (gas series, paired samples)."""
    pass


class NonPositiveMass(EnergeticsError):
    pass


class FeatureError(PaeeError):
    pass


class SeriesTooShort(FeatureError):
    pass


class MissingSensor(FeatureError):
    pass


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


class ModelError(PaeeError):
    pass


class TooFewSamples(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class ShapeMismatch(ModelError):
    pass


class EmptyDataset(ModelError):
    pass


class DivergedLoss(ModelError):
    def __init__(self, message: str, epoch: int = 0, step: int = 0):
        self.epoch = epoch
        self.step = step
        super().__init__(message)


# ---------------------------------------------------------------------------
# evaluation / stats
# ---------------------------------------------------------------------------


class EvaluationError(PaeeError):
    pass


class ZeroMeanTruth(EvaluationError):
    pass


class ConstantTruth(EvaluationError):
    pass


class StatsError(PaeeError):
    pass


class DomainError(StatsError):
    pass


class SampleSizeOutOfRange(StatsError):
    pass


class ConstantSample(StatsError):
    pass


class TooFewSubjects(StatsError):
    pass


class IncompleteGrid(StatsError):
    pass


# ---------------------------------------------------------------------------
# warnings
# ---------------------------------------------------------------------------


class RankDeficientWarning(UserWarning):
    """The least-squares design matrix does not have full column rank."""


class InclusionCriteriaWarning(UserWarning):
    """A subject falls outside the study's BMI or age inclusion range."""
