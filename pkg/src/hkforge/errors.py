"""Shared exception types."""


class HKForgeError(Exception):
    """Base class for all library errors."""


class DomainError(HKForgeError, ValueError):
    """Input outside the mathematical domain of an operation."""


class SingularFormError(HKForgeError):
    """A 2-form matrix failed invertibility at the configured condition threshold."""


class SingularPointError(HKForgeError):
    """Evaluation requested at a singular fiber point (nodal locus, X = 1, ...)."""


class WallError(HKForgeError):
    """Stability data sits on a wall of marginal stability."""


class RayProximityError(HKForgeError):
    """Evaluation point too close to an active ray for the quadrature kernel."""


class ConvergenceError(HKForgeError):
    """Iterative solver failed to converge; carries the residual history."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class DivergenceError(ConvergenceError):
    """Picard iteration left the contraction regime (some |X| >= 1)."""


class StencilError(HKForgeError):
    """A finite-difference stencil left the declared domain of a field."""


class ValidationError(HKForgeError, ValueError):
    """Configuration failed validation; carries the full list of problems."""

    def __init__(self, problems):
        problems = list(problems)
        super().__init__("; ".join(problems))
        self.problems = problems
