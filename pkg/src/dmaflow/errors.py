"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit code 1); everything
else deriving from ``DmaflowError`` is a runtime failure (exit code 2).
"""


class DmaflowError(Exception):
    pass


class ValidationError(DmaflowError, ValueError):
    pass


class LengthMismatch(ValidationError):
    pass


class ConstantSeries(ValidationError):
    def __init__(self, message, zone=None):
        super().__init__(message)
        self.zone = zone


class UnknownZone(ValidationError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class WindowTooLarge(ValidationError):
    pass


class EmptyCorrelationSet(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class SeriesTooShort(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class InsufficientHistory(ValidationError):
    pass


class PanelTooShort(ValidationError):
    pass


class MismatchedTargets(ValidationError):
    pass


class EmptySeries(ValidationError):
    pass


class MalformedCsv(ValidationError):
    pass


class IrregularCadence(ValidationError):
    pass


class NegativeFlow(ValidationError):
    pass


class GapTooLarge(ValidationError):
    pass


class DivergenceDetected(DmaflowError, ArithmeticError):
    pass


class IoError(DmaflowError, OSError):
    pass
