"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class IllConditionedCovarianceError(ValueError):
    """The Hotelling system matrix could not be factorized.

    Raised when the averaged class covariance is singular or numerically
    indefinite, typically because there are fewer samples than pixels and no
    shrinkage was requested.
    """


class DegenerateVarianceError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, message, iteration=None, item=None):
        super().__init__(message)
        self.iteration = iteration
        self.item = item


class ManifestMismatchError(RuntimeError):
    """An artifact on disk no longer matches the hash recorded upstream."""
