"""Exception types shared across the package."""

from __future__ import annotations


class MFGSDEError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MFGSDEError, ValueError):
    """Invalid configuration, mismatched inputs or a missing coefficient oracle."""


class DimensionError(MFGSDEError, ValueError):
    """An array does not have the expected shape."""


class ParameterError(MFGSDEError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class DivergenceError(MFGSDEError, FloatingPointError):
    """The Euler recursion produced a non-finite or exploding state."""

    def __init__(self, step: int, scenario: int, message: str | None = None):
        self.step = int(step)
        self.scenario = int(scenario)
        super().__init__(
            message or f"state diverged at step {self.step} in scenario {self.scenario}"
        )


class NotLipschitzError(MFGSDEError, ValueError):
    """A derivative kernel failed its Lipschitz probe; ``report`` holds the evidence."""

    def __init__(self, message: str, report: dict):
        self.report = report
        super().__init__(message)


class DifferentiabilityError(MFGSDEError, ArithmeticError):
    """A difference quotient schedule did not converge; ``report`` holds the table."""

    def __init__(self, message: str, report: dict):
        self.report = report
        super().__init__(message)
