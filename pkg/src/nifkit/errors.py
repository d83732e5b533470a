"""Exception hierarchy shared by every nifkit module.

Each class carries the CLI exit code it maps to; only the CLI turns
exceptions into exit codes.
"""


class NifkitError(Exception):
    """Base class for all nifkit errors."""

    exit_code = 2


class UsageError(NifkitError):
    """Bad command-line flags or configuration keys."""

    exit_code = 1


class InvalidInputError(NifkitError, ValueError):
    """A precondition on the inputs of an operation does not hold."""


class DegenerateColumnError(InvalidInputError):
    """A column cannot be normalized because it is constant."""

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"Column {column} is constant")


class UnsupportedConfigurationError(InvalidInputError):
    """The requested combination of options is not supported."""


class ParseError(NifkitError):
    """A file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(NifkitError):
    """A numerical routine failed."""

    exit_code = 3


class DivergenceError(NumericError):
    """A simulation or a training run blew up."""

    def __init__(
        self, message: str, step: int | None = None, epoch: int | None = None
    ):
        self.step = step
        self.epoch = epoch
        super().__init__(message)


class ConditioningError(NumericError):
    """A linear system is too ill-conditioned to solve reliably."""

    def __init__(self, message: str, condition_number: float):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3e})")


class DegenerateModeError(NumericError):
    """A spatial mode has (numerically) zero norm."""
