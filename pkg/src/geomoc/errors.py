"""Exception types shared across the package."""


class GeomocError(Exception):
    """Base class for all package-specific failures."""


class DomainError(GeomocError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ConvergenceError(GeomocError, RuntimeError):
    """An iterative solver ran out of iterations.

    Carries the best residual reached so callers can distinguish
    "almost there" from "hopeless".
    """

    def __init__(self, message: str, residual: float | None = None):
        if residual is not None:
            message = f"{message} (final residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class LineSearchError(ConvergenceError):
    """Backtracking line search could not produce a decrease."""

    def __init__(self, message: str, smallest_step: float):
        super().__init__(f"{message} (smallest step tried {smallest_step:.3e})")
        self.smallest_step = smallest_step


class NonFiniteError(GeomocError, FloatingPointError):
    """A trajectory or iterate left the space of finite numbers."""
