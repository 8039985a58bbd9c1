"""Exception types shared across the package."""

from __future__ import annotations


class NetdeployError(Exception):
    """Base class for every package-specific error."""


class InvalidArgumentError(NetdeployError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateConfigurationError(NetdeployError):
    """Coincident sensors, or another configuration the algorithms exclude."""


class SingularConfigurationError(NetdeployError):
    """A sensor sits exactly where the distance gradient is undefined."""


class OffNetworkError(NetdeployError):
    """A position that must lie on the network does not."""


class UndefinedDerivativeError(NetdeployError):
    """Derivative requested at a discontinuity of the sensing profile."""


class QuadratureError(NetdeployError):
    """Adaptive integration failed to converge on some interval."""

    def __init__(self, message: str, segment: int | None = None,
                 t_range: tuple[float, float] | None = None) -> None:
        super().__init__(message)
        self.segment = segment
        self.t_range = t_range


class AssumptionViolatedError(NetdeployError):
    """A breakpoint crossing sits at an endpoint or is tangential."""


class ScenarioError(NetdeployError, ValueError):
    """Scenario file parsing or validation failure."""
