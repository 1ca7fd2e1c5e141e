"""Exception types shared across ktune."""


class KtuneError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class SpaceError(KtuneError, ValueError):
    """Invalid tuning space definition."""


class ConstraintSyntaxError(SpaceError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class EvaluationError(KtuneError):
    """Constraint evaluation failed (type mismatch, division by zero)."""


class ExecutionError(KtuneError):
    """A kernel could not be executed in run mode."""


class TraceError(KtuneError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
