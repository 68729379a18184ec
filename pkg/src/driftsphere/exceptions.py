"""Typed errors raised across the package.

Keeping these distinct lets callers (and tests) tell a mathematical
divergence apart from a plain bad argument or a numerical blow-up.
"""


class DriftsphereError(Exception):
    """Base class for all package errors."""


class DomainError(DriftsphereError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(DriftsphereError, ValueError):
    """Array arguments have incompatible shapes or dimensions."""


class SingularityError(DriftsphereError, ArithmeticError):
    """A density or metric is evaluated at a point where it diverges."""


class DegenerateError(DriftsphereError, ValueError):
    """An otherwise valid input produces a degenerate result (e.g. a zero
    resultant when averaging directions)."""


class NonFiniteError(DriftsphereError, ArithmeticError):
    """A forward or backward pass produced NaN or infinity.

    ``node`` names the offending value so training failures are
    attributable.
    """

    def __init__(self, message: str, node: str | None = None):
        super().__init__(message if node is None else f"{message} (node: {node})")
        self.node = node


class RejectionError(DriftsphereError, RuntimeError):
    """Rejection sampling failed to find an admissible draw within the
    attempt budget."""
