"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes are not conformable."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class SpecError(ValueError):
    """An experiment specification failed validation.

    ``fields`` lists the offending field names.
    """

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


class NumericError(RuntimeError):
    """A numerical routine failed (bracket not found, singular system...)."""


class ConvergenceError(NumericError):
    """An iterative solver hit its iteration cap.

    The best iterate found so far is kept on ``best`` for diagnosis.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
