"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid physical or numerical parameters."""


class SingularMatrixError(ArithmeticError):
    """A linear solve hit an (effectively) singular matrix."""


class DegeneratePointError(ArithmeticError):
    """Mid-spectrum degeneracy at a single quadrature point."""

    def __init__(self, k, eta, gap):
        super().__init__(
            f"mid-spectrum gap {gap:.3e} below tolerance at k={k:.6f}, eta={eta:.6f}"
        )
        self.k = k
        self.eta = eta
        self.gap = gap


class GaplessModelError(ArithmeticError):
    """The integration grid crossed a gapless point; the invariant is undefined."""


class ArnoldiError(ArithmeticError):
    """Iterative eigensolve failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BasisDeficiencyError(ArithmeticError):
    """Truncated basis cannot represent the dual vacuum; observables unreliable."""


class ContractionViolationError(ArithmeticError):
    """Propagator row norms exceeded 1 beyond tolerance (non-contractive)."""
