"""Exception hierarchy shared by all tenfuse modules."""


class TenfuseError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(TenfuseError):
    """Shapes of the operands do not conform."""


class NumericError(TenfuseError):
    """Input contains NaN/Inf or an operation produced non-finite values."""


class ConvergenceError(TenfuseError):
    """An iterative routine ran out of sweeps.

    Carries ``off_diagonal``, the relative off-diagonal magnitude achieved
    when the sweep budget was exhausted.
    """

    def __init__(self, message: str, off_diagonal: float):
        super().__init__(message)
        self.off_diagonal = off_diagonal


class LabelError(TenfuseError):
    """A class index is outside the valid label range."""


class InputError(TenfuseError):
    """A scalar argument violates its domain (e.g. negative distance)."""


class ConfigError(TenfuseError):
    """Training/generation configuration is inconsistent with the data."""


class FormatError(TenfuseError):
    """A binary file is malformed.  Carries the byte ``offset`` of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EvalError(TenfuseError):
    """Evaluation inputs are unusable (empty lists, unmatched labels)."""


class UnsupportedError(TenfuseError):
    """Operation requires the factored parameterization."""


class DegenerateModelError(TenfuseError):
    """Compaction would remove every slice along some mode."""
