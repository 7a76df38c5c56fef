"""Exception types raised across the library."""


class MaskLabError(Exception):
    """Base class for all masklab errors."""


class BoundsError(MaskLabError, ValueError):
    """A box or index falls outside the buffer it addresses."""


class DegenerateBoxError(MaskLabError, ValueError):
    """A box has zero or negative area where positive area is required."""


class DegenerateShapeError(MaskLabError, ValueError):
    """A synthetic shape rendered to an empty mask."""


class MalformedFileError(MaskLabError, ValueError):
    """A file is truncated, has a bad header, or declares absurd dimensions."""


class DimensionMismatchError(MaskLabError, ValueError):
    """Two buffers that must share a shape do not."""


class NoNegativeBagsError(MaskLabError, ValueError):
    """Bag construction found no background rows or columns.

    Happens when the ground-truth box spans the full crop in both axes,
    i.e. the expansion margin was too small or got clipped away.
    """


class UndefinedDiceError(MaskLabError, ZeroDivisionError):
    """Dice denominator is zero (both operands identically zero)."""


class NormalizationError(MaskLabError, ValueError):
    """A vector or cluster center with zero norm cannot be normalized."""


class NonFiniteLossError(MaskLabError, ArithmeticError):
    """The optimization loop produced a NaN or infinite loss."""


class ConfigError(MaskLabError, ValueError):
    """A configuration file or CLI argument failed validation."""
