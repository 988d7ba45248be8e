"""Exception hierarchy shared by the kernel, the services and the CLI."""

from typing import Any, Optional


class NoidKitError(ValueError):
    """Base class of all domain errors."""

    exit_code = 1

    def __init__(self, message: str, **payload: Any):
        super().__init__(message)
        self.payload = payload

    def __getattr__(self, name: str) -> Any:
        payload = self.__dict__.get("payload", {})
        if name in payload:
            return payload[name]
        raise AttributeError(name)


class ValidationFailure(NoidKitError):
    """Input data violates a documented invariant."""

    exit_code = 1


class SolverFailure(NoidKitError):
    """A numerical stage did not reach its tolerance."""

    exit_code = 2


class ArtifactError(NoidKitError):
    """Reading or writing a run file failed."""

    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message, path=path)


class InvalidOperandError(ValidationFailure):
    """Loops with different weights were combined."""


class DomainError(ValidationFailure):
    """Evaluation point outside the annulus of convergence."""


class InvalidInputError(ValidationFailure):
    """Argument violates an operation precondition."""


class PoleError(ValidationFailure):
    """Evaluation at a pole; kind is 'b_root' or 'end'."""


class ConstructionError(ValidationFailure):
    """Builtin data failed its own validation."""


class DegenerateInputError(ValidationFailure):
    """Parameters collapse (duplicate ends, common roots, low degree)."""


class InvalidBasepointError(ValidationFailure):
    """Basepoint sits on the singular set."""


class InvalidRegionError(ValidationFailure):
    """Gauge requested where it is not defined."""


class NoRealSolutionError(ValidationFailure):
    """The (r, s) system has no real solution."""


class NotNearIdentityError(SolverFailure):
    """Loop logarithm requested outside its convergence radius."""


class ConvergenceError(SolverFailure):
    """Iteration stopped before reaching tolerance."""


class ContourError(SolverFailure):
    """A pole lies on or too close to an integration contour."""


class AccuracyError(SolverFailure):
    """Quadrature did not converge within the node limit."""


class GaugeError(SolverFailure):
    """A gauge sample is not invertible."""


class BranchError(SolverFailure):
    """A path crosses the branch cut of a square root."""


class TransportError(SolverFailure):
    """ODE transport failed, typically near a singularity."""


class MonodromyStructureError(SolverFailure):
    """log M is not divisible by (lambda - 1)^2 / lambda."""


class ContinuationError(SolverFailure):
    """Continuation step fell below the floor."""


class PreconditionError(SolverFailure):
    """Stage called on data that has not been solved."""


class MonodromyLeakError(SolverFailure):
    """Immersion values disagree along homotopically distinct paths."""


class UndefinedGaussMapError(SolverFailure):
    """Gauss map undefined where the lower-left entry vanishes."""
