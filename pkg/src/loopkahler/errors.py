"""Exception hierarchy for loopkahler."""


class LoopKahlerError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(LoopKahlerError, ValueError):
    """A point, vector or loop lies outside the region where an operation is defined."""


class NotKahlerError(DomainError):
    """An operation that needs the Levi-Civita connection was asked of a non-Kahler model."""


class GridMismatchError(DomainError):
    """Loop data living on different grids (or bases) were combined."""


class AmbiguousGeodesicError(DomainError):
    """The endpoints of a geodesic boundary-value problem are antipodal.

    ``nodes`` lists the offending loop nodes when raised during loop assembly.
    """

    def __init__(self, message, nodes=()):
        super().__init__(message)
        self.nodes = list(nodes)


class NumericError(LoopKahlerError, ArithmeticError):
    """A numerical procedure failed (singular matrix, non-convergent iteration)."""


class FDConvergenceError(NumericError):
    """A finite-difference estimate did not show the expected convergence order.

    The successive estimates are attached so the caller can inspect them.
    """

    def __init__(self, message, estimates=(), order=None):
        super().__init__(message)
        self.estimates = list(estimates)
        self.order = order
