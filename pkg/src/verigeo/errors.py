"""Exception hierarchy.

User-facing input problems derive from :class:`InputError` and numerical
breakdowns from :class:`NumericalError`; the CLI maps the two families to
exit codes 1 and 2.
"""


class VerigeoError(Exception):
    """Base class for all package errors."""


class InputError(VerigeoError, ValueError):
    """Bad user input: files, schemas, parameters."""


class NumericalError(VerigeoError, ArithmeticError):
    """A numerical step broke down."""


class SchemaError(InputError):
    """A required CSV column is missing or a design term is invalid."""


class ParseError(InputError):
    """A CSV cell could not be parsed as a finite real."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DimensionError(InputError):
    """Array lengths disagree."""


class ParameterError(InputError):
    """A parameter lies outside its admissible range."""


class DomainError(InputError):
    """A function was called outside its domain (e.g. empty vector)."""


class ConfigError(InputError):
    """Malformed configuration file or value."""


class SingularityError(NumericalError):
    """A (weighted) Gram matrix is singular or numerically rank deficient."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class CovarianceError(NumericalError):
    """A covariance or kriging matrix is not positive definite."""


class EstimationError(NumericalError):
    """An estimator has nothing to work with (e.g. all variogram bins empty)."""


class FitError(NumericalError):
    """The optimizer failed at every start."""

    def __init__(self, message, best_objective=None):
        super().__init__(message)
        self.best_objective = best_objective
