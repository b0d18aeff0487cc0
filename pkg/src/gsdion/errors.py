"""Exception hierarchy. Each class maps to a CLI exit code."""


class GsdError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParseError(GsdError):
    """Malformed or invalid configuration text."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(GsdError, ValueError):
    """An input violates an operation's precondition."""

    exit_code = 3


class ConfigurationError(GsdError, ValueError):
    """Parameters are individually valid but jointly unusable."""

    exit_code = 3


class OutOfRangeError(ValidationError):
    """A query point lies outside the sampled domain."""


class NumericalError(GsdError, ArithmeticError):
    """An integrator or solver left its accuracy envelope."""

    exit_code = 4


class AnalysisError(GsdError):
    """Data cannot be analysed (no crossing, degenerate image, ...)."""

    exit_code = 5


class DegenerateInputError(AnalysisError, ValueError):
    """Input carries no information (zero visibility, constant image)."""
