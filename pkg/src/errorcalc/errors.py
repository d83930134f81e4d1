"""Exception hierarchy shared by every module."""


class ErrorCalcError(Exception):
    """Base class for all errors raised by :mod:`errorcalc`."""


class ParseError(ErrorCalcError, ValueError):
    """Malformed expression text. ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class DomainError(ErrorCalcError, ArithmeticError):
    """Evaluation left the domain of an operation.

    ``sample_index`` and ``point`` are filled in by batch evaluators and the
    oracle so the offending input can be reported.
    """

    def __init__(self, message: str, sample_index: int | None = None, point=None):
        if sample_index is not None:
            message = f"{message} (sample {sample_index})"
        if point is not None:
            message = f"{message} at point {list(map(float, point))}"
        super().__init__(message)
        self.sample_index = sample_index
        self.point = point


class StructureError(ErrorCalcError, ValueError):
    """Invalid error structure or frame, e.g. a covariance that is not PSD."""

    def __init__(self, message: str, min_eigenvalue: float | None = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class UnsupportedSamplingError(ErrorCalcError, ValueError):
    pass


class PreconditionError(ErrorCalcError, ValueError):
    pass


class FrameMismatchError(ErrorCalcError, ValueError):
    pass
