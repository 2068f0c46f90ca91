"""Exception hierarchy shared across the package."""


class GPFlowError(Exception):
    """Base class for all package errors."""


class GridMismatchError(GPFlowError, ValueError):
    """Two fields (or a field and an operator) live on different grids."""


class ZeroFieldError(GPFlowError, ValueError):
    """An operation needing a nonzero field received one with zero mass."""


class FieldFormatError(GPFlowError, ValueError):
    """A field file has a malformed header or a payload inconsistent with it."""


class NotNormalizedError(GPFlowError, ValueError):
    """A unit-mass field was required."""


class SolverError(GPFlowError, RuntimeError):
    """Base class for linear solver failures."""


class NonConvergenceError(SolverError):
    def __init__(self, iterations, residual, target):
        self.iterations = iterations
        self.residual = residual
        self.target = target
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(residual {residual:.3e}, target {target:.3e})"
        )


class IndefiniteMetricError(SolverError):
    """CG met a direction of nonpositive curvature.

    For the a0/au metrics this means the trapping potential does not dominate
    the centrifugal term on this grid.
    """

    def __init__(self, metric, curvature):
        self.metric = metric
        self.curvature = curvature
        super().__init__(
            f"metric {metric!s} is not positive definite "
            f"(curvature {curvature:.3e}); check the admissibility of V and omega"
        )


class DissipationError(GPFlowError, RuntimeError):
    """A step violated the energy dissipation inequality."""

    def __init__(self, n, decrease, bound):
        self.n = n
        self.decrease = decrease
        self.bound = bound
        super().__init__(
            f"dissipation violated at iteration {n}: "
            f"E(u_n) - E(u_n+1) = {decrease:.6e} < {bound:.6e}"
        )


class ConfigError(GPFlowError, ValueError):
    """Invalid run configuration. ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
