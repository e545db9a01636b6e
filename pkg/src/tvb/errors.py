"""Exception hierarchy shared by the library and the CLI.

Each class carries a ``category`` string that the CLI maps to an exit code.
"""


class TvbError(Exception):
    category = "numeric"


class DomainError(TvbError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    category = "schema"


class ConvergenceError(TvbError, RuntimeError):
    """An iterative routine exhausted its budget."""

    category = "convergence"


class NumericError(TvbError, ArithmeticError):
    """Non-finite values or a singular matrix inside a fit."""

    category = "numeric"

    def __init__(self, message, *, cluster=None, term=None):
        super().__init__(message)
        self.cluster = cluster
        self.term = term


class SchemaError(TvbError, ValueError):
    """Malformed configuration or input file."""

    category = "schema"
