"""Exception hierarchy shared by all glap modules."""


class GlapError(Exception):
    """Base class for every error raised by glap."""


class DomainError(GlapError, ValueError):
    """Argument outside the mathematical domain (negative t, f(t) <= 0, ...)."""


class RangeError(GlapError, ValueError):
    """Tabulated Young function queried too far outside its table."""


class SaturationError(GlapError, ArithmeticError):
    """A root search left the representable / numeric domain."""


class DegeneracyError(GlapError, ArithmeticError):
    """A ratio check hit g(t) = 0 or G(t) = 0 at t > 0."""


class MeshError(GlapError, ValueError):
    """Invalid mesh request or degenerate element."""


class SolverError(GlapError, RuntimeError):
    """Non-finite assembly results or an unusable linear solve."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node
