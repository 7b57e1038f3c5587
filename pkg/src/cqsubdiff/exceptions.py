class NonAdmissibleError(ValueError):
    """Weights violate the sign condition w0 > 0, w_j < 0 (j >= 1)."""


class AssemblyError(ValueError):
    """Diffusivity is not positive at a quadrature point."""


class SingularMatrixError(ArithmeticError):
    pass


class InvalidFixtureError(ValueError):
    """A verifier's hypothesis does not hold for the supplied data."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(ValueError):
    pass


class UndefinedOrderError(ArithmeticError):
    """Difference norms too small for a meaningful order estimate."""
