"""Exception hierarchy shared by every module of the package."""


class MacError(Exception):
    """Base class for all package errors."""


class ShapeError(MacError, ValueError):
    pass


class DegenerateInputError(MacError, ValueError):
    """An operation received input with nothing valid to work on (all rows masked, empty text...)."""


class ContractError(MacError, ValueError):
    pass


class ConfigError(MacError, ValueError):
    pass


class DataError(MacError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelError(DataError):
    pass


class GloveFormatError(DataError):
    pass


class SplitError(DataError):
    pass


class EvaluationError(MacError, ArithmeticError):
    """A function under gradient check returned a non-finite value."""


class MetricUndefinedError(MacError, ValueError):
    pass


class TestUndefinedError(MacError, ValueError):
    __test__ = False  # keep pytest from collecting this as a test class


class NonFiniteGradientError(MacError, FloatingPointError):
    def __init__(self, parameter: str):
        self.parameter = parameter
        super().__init__(f"non-finite gradient in parameter {parameter!r}")


class CheckpointError(MacError, ValueError):
    pass
