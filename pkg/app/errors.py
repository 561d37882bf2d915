"""
Exception hierarchy shared by the services, the CLI and the HTTP routers.

Each error knows its CLI exit code and the HTTP status the routers answer with.
"""


class ToolkitError(Exception):
    exit_code = 1
    status_code = 500


class InputError(ToolkitError):
    """Unreadable or invalid input data."""
    exit_code = 2
    status_code = 400


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateDateError(InputError):
    def __init__(self, date: str):
        self.date = date
        super().__init__(f"duplicate date {date}")


class ConfigurationError(ToolkitError):
    """Inconsistent dimensions, flags or settings."""
    exit_code = 3
    status_code = 422


class ParameterDomainError(ToolkitError):
    """A parameter vector outside its admissible domain."""
    exit_code = 3
    status_code = 422


class NonstationarityError(ParameterDomainError):
    pass


class DomainError(ToolkitError):
    """A statistic requested outside the domain where it is defined."""
    exit_code = 3
    status_code = 422


class NumericalDivergenceError(ToolkitError):
    exit_code = 4
    status_code = 422

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        self.reason = message
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)

    def at_step(self, step: int) -> "NumericalDivergenceError":
        """Return a copy annotated with the failing step index."""
        return NumericalDivergenceError(self.reason, step=step)
