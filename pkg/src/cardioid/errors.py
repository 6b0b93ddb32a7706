"""Exception hierarchy. Every domain failure derives from :class:`CardioIdError`."""


class CardioIdError(Exception):
    """Base class for all domain errors raised by the package."""


# ingestion
class MalformedInput(CardioIdError):
    pass


class TooShort(CardioIdError):
    pass


class NonMonotonicTime(CardioIdError):
    pass


class EmptyFrameSequence(CardioIdError):
    pass


class DimensionMismatch(CardioIdError):
    pass


class InvalidSpec(CardioIdError):
    pass


# filtering
class SignalTooShort(CardioIdError):
    pass


class BandOutOfRange(CardioIdError):
    pass


class F1hOutOfRange(CardioIdError):
    pass


# segmentation / features
class NoPeriodsFound(CardioIdError):
    pass


class TooFewPeriods(CardioIdError):
    pass


class HMorphologyMismatch(CardioIdError):
    pass


class DegenerateGap(CardioIdError):
    pass


# learning
class InsufficientData(CardioIdError):
    pass


class SingularScatter(CardioIdError):
    pass


class NonFiniteLoss(CardioIdError):
    pass


class UnknownMorphology(CardioIdError):
    pass


class TooFewPoints(CardioIdError):
    pass


class EmptyInput(CardioIdError):
    pass


class NotPositiveDefinite(CardioIdError):
    pass


# evaluation
class UndefinedRate(CardioIdError):
    pass


class InvalidCounts(CardioIdError):
    pass


class EmptySubset(CardioIdError):
    pass


class TooFewSubjects(CardioIdError):
    pass


class ConfigError(CardioIdError):
    pass
