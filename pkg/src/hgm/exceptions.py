"""Exception hierarchy shared across the package."""


class HGMError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HGMError, ValueError):
    """A numeric argument is outside its documented domain."""


class UsageError(HGMError, RuntimeError):
    """An operation was called in a state where it is not allowed."""


class EvaluationStarved(UsageError):
    """No agent has an unassigned task left; the caller must expand instead."""


class CapacityError(HGMError, RuntimeError):
    """An exhaustive computation would exceed its configured limit."""


class LogFormatError(HGMError, ValueError):
    """A run log line could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
