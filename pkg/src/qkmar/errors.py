"""Exception hierarchy. Each family maps to a CLI exit code."""


class QkmarError(Exception):
    exit_code = 1


class ConfigError(QkmarError, ValueError):
    """Invalid configuration, dimensions or hyperparameters."""

    exit_code = 2


class DataError(QkmarError, ValueError):
    """Input data violates its contract (labels, pixel values, class counts)."""

    exit_code = 3


class FormatError(DataError):
    """Malformed SARC / QKGM / manifest file."""


class NumericalError(QkmarError, ArithmeticError):
    exit_code = 4


class ContractError(QkmarError, ValueError):
    """A numerical precondition (shape, symmetry) was violated by the caller."""

    exit_code = 4
