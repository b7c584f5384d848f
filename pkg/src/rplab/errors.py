"""Exception hierarchy shared by every rplab module."""


class RplabError(Exception):
    """Base class for all rplab errors."""


class InvalidInput(RplabError, ValueError):
    pass


class InvalidDimension(InvalidInput):
    pass


class InvalidOrder(InvalidInput):
    pass


class OutOfRange(InvalidInput):
    pass


class ConfigError(InvalidInput):
    pass


class ParseError(InvalidInput):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyKernel(RplabError):
    pass


class EmptyConditional(RplabError):
    pass


class FitUndefined(RplabError):
    pass


class HypothesisViolated(RplabError):
    """Raised when a source fails Frostman certification; carries the report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
