"""Exception hierarchy.

Library code raises these; only the CLI turns them into exit codes.
"""

from __future__ import annotations


class AOTError(Exception):
    """Base class for every error raised by amortot."""

    exit_code: int = 1


class ConfigError(AOTError):
    exit_code = 2


class DataError(AOTError, ValueError):
    """Invalid input data: shapes, domains, weights, files."""

    exit_code = 3


class NumericalError(AOTError, ArithmeticError):
    exit_code = 4


# --- data errors ---

class DimensionMismatch(DataError):
    pass


class DomainMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class PositivityViolation(DataError):
    pass


class EpsilonNonPositive(DataError):
    pass


class MassMismatch(DataError):
    pass


class EmptyMeasure(DataError):
    pass


class TooLarge(DataError):
    pass


class BadDimension(DataError):
    pass


class InvalidSpec(DataError):
    pass


class BadMagic(DataError):
    pass


class BadVersion(DataError):
    pass


class TruncatedFile(DataError):
    pass


class MassNotNormalizable(DataError):
    pass


class BadT(DataError):
    pass


class WrongCostFamily(DataError):
    pass


class DegeneratePlan(DataError):
    pass


# --- numerical errors ---

class SingularGram(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class SinkhornNotConverged(NumericalError):
    pass
