"""Exception hierarchy shared across the package."""


class LongalError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LongalError, ValueError):
    pass


class InsufficientTimepoints(LongalError, ValueError):
    pass


class MissingSlice(LongalError, ValueError):
    pass


class DuplicateSlice(LongalError, ValueError):
    pass


class InvalidPair(LongalError, ValueError):
    pass


class GeometryError(LongalError, RuntimeError):
    """A lesion could not be placed inside the foreground."""


class DatasetFormatError(LongalError, ValueError):
    pass


class TooFewPatients(LongalError, ValueError):
    pass


class ShapeMismatch(LongalError, ValueError):
    pass


class EmptyLabeledSet(LongalError, ValueError):
    pass


class EmptyUnlabeledSet(LongalError, ValueError):
    pass


class InsufficientPasses(LongalError, ValueError):
    pass


class NonFiniteLoss(LongalError, FloatingPointError):
    pass


class BudgetExceedsPool(LongalError, ValueError):
    pass


class MissingGroundTruth(LongalError, KeyError):
    pass


class CorruptCheckpoint(LongalError, ValueError):
    pass


class ConfigError(LongalError, ValueError):
    pass


class DegenerateRangeWarning(UserWarning):
    """Raised as a warning when a slice has max == min; the slice is zeroed."""
