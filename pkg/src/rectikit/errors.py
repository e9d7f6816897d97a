"""Exception hierarchy shared by the library and the CLI."""


class RectikitError(Exception):
    """Base class for all library errors."""


class DomainError(RectikitError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class RangeError(DomainError):
    """A log-SNR value cannot be mapped back to a time in the clipped range."""


class TrainingError(RectikitError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""


class GenerationError(RectikitError, ArithmeticError):
    """Pair generation rejected too many non-finite samples."""


class FormatError(RectikitError, ValueError):
    """A checkpoint or pair file is malformed."""
