"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A model component violates one of its invariants."""


class TruncationError(ArithmeticError):
    """A series did not converge within the allowed number of terms.

    ``partial`` is the partial sum reached and ``bound`` the size of the
    rejection-product tail at the point of giving up.
    """

    def __init__(self, message, partial=None, bound=None):
        super().__init__(message)
        self.partial = partial
        self.bound = bound


class InstabilityError(ArithmeticError):
    """A queue metric was requested for a load at or above capacity."""

    def __init__(self, message, rho=None, capacity=None):
        super().__init__(message)
        self.rho = rho
        self.capacity = capacity


class InfiniteMomentError(ArithmeticError):
    """The service time has an infinite moment needed by the metric."""


class NoSignChangeError(ValueError):
    """Root bracketing failed because the function does not change sign."""
