"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model, frame or run configuration is inconsistent or incomplete."""


class BasisMismatchError(ValueError):
    """Operators defined on different bases were combined."""


class UnsupportedSpectralDensity(ValueError):
    """The requested operation needs a pole structure the spectral density lacks."""


class QuadratureError(RuntimeError):
    """Numerical quadrature failed to converge.

    Attributes
    ----------
    estimate : float
        Error estimate reported by the integrator (``inf`` for divergent
        integrals).
    """

    def __init__(self, message, estimate=float("inf")):
        super().__init__(message)
        self.estimate = estimate


class DivergenceError(RuntimeError):
    """A hierarchy propagation blew up."""

    def __init__(self, message, tier, slot, t):
        super().__init__(message)
        self.tier = tier
        self.slot = slot
        self.t = t


class ResourceBudgetError(RuntimeError):
    """The requested hierarchy does not fit in the configured budget."""

    def __init__(self, message, size):
        super().__init__(message)
        self.size = size
