"""Exception types raised by the sketch, solver and harness layers."""


class SketchError(ValueError):
    """Base class for all momentsketch errors."""


class InvalidParameterError(SketchError):
    pass


class InvalidValueError(SketchError):
    pass


class IncompatibleSketchError(SketchError):
    pass


class InvalidSubtractionError(SketchError):
    pass


class SketchFormatError(SketchError):
    pass


class EmptySketchError(SketchError):
    pass


class DegenerateSupportError(SketchError):
    """Raised when min == max; the data is a point mass at ``value``."""

    def __init__(self, value: float):
        super().__init__(f"degenerate support: all values equal {value!r}")
        self.value = value


class EstimateUnavailableError(SketchError):
    """The maximum-entropy solve did not converge, so no density is available."""
