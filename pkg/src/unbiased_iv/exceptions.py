"""Exception types raised by the estimators and the data pipeline."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class DegenerateError(ArithmeticError):
    """A ratio estimator hit a zero (or numerically zero) denominator."""


class ConditioningError(ArithmeticError):
    """A matrix that must be positive definite (or full rank) is not."""


class DataError(ValueError):
    """Input data failed schema or rank validation."""
