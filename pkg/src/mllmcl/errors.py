"""Exception hierarchy shared by every module.

``ValidationError`` covers bad inputs and configuration; the CLI maps it to
exit code 1. I/O problems surface as plain ``OSError`` (exit code 2).
"""


class ValidationError(ValueError):
    pass


class NonFiniteValue(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class ZeroNorm(ValidationError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NonPositiveTemperature(ValidationError):
    pass


class InsufficientPoints(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class InvalidMargin(InvalidConfig):
    pass


class EmptyCorpus(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class MissingField(ParseError):
    def __init__(self, field, line=None):
        super().__init__(f"missing field {field!r}", line)
        self.field = field


class BatchTooSmall(ValidationError):
    pass


class TokenIdOutOfRange(ValidationError):
    pass


class PositionOutOfRange(ValidationError):
    pass


class EmptyTargets(ValidationError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass
