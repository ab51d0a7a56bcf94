"""Exception types shared across the package."""


class MudlossError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(MudlossError):
    """Invalid configuration value or command usage."""


class DataError(MudlossError):
    """Input data violates a contract (schema, finiteness, shape, range)."""


class FitError(MudlossError):
    """Model fitting failed."""


class CholeskyError(FitError):
    """Covariance factorization failed after exhausting the jitter budget."""


class NotConvergedError(MudlossError):
    """An iterative solver hit its iteration cap before converging."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message)
        self.iterations = iterations


class StageError(MudlossError):
    """A pipeline stage failed; carries the stage name for reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
