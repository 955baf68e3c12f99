"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """An argument violates a documented precondition."""


class AssumptionAViolationError(RuntimeError):
    """The assembled operator is singular or nearly so: zero is (numerically)
    a Dirichlet eigenvalue, and the forward problem is not uniquely solvable."""


class NumericError(RuntimeError):
    """A computation failed to reach its accuracy contract (non-convergent
    quadrature, overflow guard, unresolved solve)."""


class UnsupportedError(NotImplementedError):
    """The requested case is outside the implemented range (e.g. trace
    conversion for orders above three, curved boundary charts)."""
