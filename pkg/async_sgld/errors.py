# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Exception hierarchy shared by the library and the CLI.

Every class carries the process exit code the CLI reports for it.
"""


class SgldError(Exception):
    """Base class for all errors raised by async_sgld."""

    exit_code = 1


class InvalidInputError(SgldError, ValueError):
    """An argument violates an operation's precondition."""

    exit_code = 2


class DimensionError(InvalidInputError):
    """A vector or matrix does not have the expected dimension."""


class ConfigError(SgldError):
    """An experiment config is malformed or inconsistent."""

    exit_code = 2


class DataError(SgldError):
    """An input data file or stored artifact cannot be used."""

    exit_code = 3


class NumericalError(SgldError):
    """A computation produced a non-finite or non-admissible result."""

    exit_code = 4


class GridLeakageError(NumericalError):
    """Too many samples fall outside a histogram grid."""

    def __init__(self, leakage: float, limit: float):
        super().__init__(
            f"{leakage:.2%} of the sample weight lies outside the grid (limit {limit:.2%})"
        )
        self.leakage = leakage
        self.limit = limit
