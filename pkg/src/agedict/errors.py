"""Exception hierarchy shared across the package."""


class AgeDictError(Exception):
    """Base class for all package errors."""


class InputError(AgeDictError, ValueError):
    """Invalid or non-finite input data."""


class DimensionError(InputError):
    """Array shapes do not agree."""


class FormatError(AgeDictError):
    """Malformed container, manifest or image file."""


class IntegrityError(AgeDictError):
    """A stored object violates a model invariant (e.g. atom norm)."""


class NumericalError(AgeDictError, ArithmeticError):
    """Singular system or non-finite intermediate values."""


class ConvergenceError(AgeDictError):
    """Iteration cap reached before the tolerance was met.

    The best iterate found so far is kept on ``best`` so callers can
    decide whether it is good enough.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
