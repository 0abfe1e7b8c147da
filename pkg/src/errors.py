from __future__ import annotations


class LaboratoryError(Exception):
    """Base for every error raised on purpose by this package."""


class DomainError(LaboratoryError, ValueError):
    pass


class DimensionError(LaboratoryError, ValueError):
    pass


class ParameterError(LaboratoryError, ValueError):
    pass


class ConfigError(LaboratoryError, ValueError):
    pass


class InsufficientDataError(LaboratoryError, ValueError):
    pass


class DegenerateWeightError(LaboratoryError, ValueError):
    pass


class SingularPointError(LaboratoryError, ValueError):
    """V' is requested at the shell r = R where it is not defined."""

    def __init__(self, message: str, *, left: float | None = None, right: float | None = None) -> None:
        super().__init__(message)
        self.left = left
        self.right = right


class ConvergenceError(LaboratoryError, RuntimeError):
    def __init__(self, message: str, *, grad_norm: float, iterations: int) -> None:
        super().__init__(f"{message} (gradient norm {grad_norm:.3e} after {iterations} iterations)")
        self.grad_norm = grad_norm
        self.iterations = iterations
