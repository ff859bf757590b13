"""Exception hierarchy shared by all qmem modules."""


class QmemError(Exception):
    """Base class for every error raised by qmem."""


class DomainError(QmemError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(QmemError, ValueError):
    """A structural setting (grid size, range, option) is unusable."""


class NumericalError(QmemError, ArithmeticError):
    """A numerical procedure failed to converge or produced non-finite values."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StiffnessError(NumericalError):
    """Adaptive step size collapsed before reaching the end time."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(message)
        self.t_reached = t_reached


class InsufficientDataError(QmemError, ValueError):
    """Input series is too short for the requested analysis."""


class FitError(QmemError, ValueError):
    """A least-squares fit could not be performed or is degenerate."""


class ParseError(QmemError, ValueError):
    """A run configuration could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
