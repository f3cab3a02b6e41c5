"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Matrix or vector shapes are inconsistent."""


class DomainError(ValueError):
    """An argument lies outside the documented domain of an operation."""


class InstabilityError(ValueError):
    """A closed-loop matrix with spectral radius >= 1 where stability is required."""


class InitializationError(ValueError):
    """A gain-initialization strategy produced a non-stabilizing gain."""


class ConvergenceError(RuntimeError):
    """An iteration hit its budget before reaching the requested tolerance."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class StallError(RuntimeError):
    """Too many consecutive rejected steps in a safeguarded run."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class NumericalError(RuntimeError):
    """An internal exact identity failed beyond its tolerance."""


class DiagnosticError(RuntimeError):
    """A diagnostic check failed outright (not just inconclusive)."""


class ConfigError(ValueError):
    """Configuration file is malformed or violates the schema."""
