"""Error types shared by every stage; the CLI maps them to exit codes."""
from __future__ import annotations


class InvalidInputError(ValueError):
    """Input violates an operation's precondition (shape, range, dimension)."""


class InsufficientCorrespondencesError(InvalidInputError):
    """Too few matched points for alignment."""


class DegenerateConfigurationError(InvalidInputError):
    """Point sets whose cross-covariance is rank deficient (e.g. collinear)."""


class SchemaError(InvalidInputError):
    """Config or manifest field is missing, unknown or out of its domain."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class DegenerateMixtureError(ArithmeticError):
    """All mixture weights are zero or every density underflowed."""


class DegenerateFeatureError(ArithmeticError):
    """Aggregated feature norm too small to normalize."""


class NumericalFailureError(ArithmeticError):
    """NaN or inf showed up while optimizing."""

    def __init__(self, iteration: int, message: str = "loss is not finite") -> None:
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
