"""Exception types raised by the quasiseparable toolkit."""


class StructureError(ValueError):
    """Generator shapes are inconsistent, or input violates a declared structure."""

    def __init__(self, message, k=None):
        if k is not None:
            message = f"block k={k}: {message}"
        super().__init__(message)
        self.k = k


class PartitionMismatch(ValueError):
    """Two operands do not share the same block partition."""


class SingularPivot(ArithmeticError):
    """A pivot block of the pivot-free LU is numerically singular.

    Raised when strong regularity (all leading principal minors nonzero)
    is violated to working precision.
    """

    def __init__(self, k, rcond, level=1):
        self.k = k
        self.rcond = rcond
        self.level = level
        super().__init__(
            f"singular pivot at level-{level} block k={k} (rcond estimate {rcond:.3e})"
        )


class PcgBreakdown(ArithmeticError):
    """CG curvature p^T A p was non-positive: the operator or preconditioner is not SPD."""

    def __init__(self, iteration, curvature):
        self.iteration = iteration
        self.curvature = curvature
        super().__init__(
            f"PCG breakdown at iteration {iteration}: p^T A p = {curvature:.3e} <= 0"
        )
