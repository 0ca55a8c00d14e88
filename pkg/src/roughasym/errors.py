"""Exception and warning types shared across the package."""


class RoughAsymError(Exception):
    """Base class for package errors."""


class GridMismatch(RoughAsymError, ValueError):
    """Operands live on different grids (or refinement levels)."""


class LevelMismatch(RoughAsymError, ValueError):
    """Model does not carry enough iterated-integral levels."""


class DegenerateSpec(RoughAsymError, ValueError):
    """Volatility specification violates a precondition (e.g. sigma(0) <= 0)."""


class NonConvergence(RoughAsymError, RuntimeError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegenerateMinimizer(RoughAsymError, RuntimeError):
    """Non-degeneracy margin of the optimizer is not positive; downstream
    asymptotics would be meaningless and are refused."""


class QuadratureError(RoughAsymError, RuntimeError):
    """Adaptive quadrature failed to converge."""


class WeightDegeneracyWarning(UserWarning):
    """Importance-sampling effective sample size collapsed below threshold."""
