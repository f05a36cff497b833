"""
Exception types raised across the package.

Every class derives from a built-in exception so callers may keep catching
ValueError / ArithmeticError / FileNotFoundError broadly. main.py maps the
three families to exit codes:
- ConfigError, UnknownProblemError  -> 2
- MissingArtifactError              -> 3
- NumericalError                    -> 4
"""

from typing import Optional


class ConfigError(ValueError):
    """Invalid experiment configuration or command-line usage."""


class UnknownProblemError(ConfigError, LookupError):
    def __init__(self, name: str, valid):
        self.name = name
        self.valid = sorted(valid)
        super().__init__(f"Unknown problem '{name}'. Valid ids: {', '.join(self.valid)}")


class ContractViolation(ValueError):
    """A caller broke an operation precondition (shapes, ranges, ordering)."""


class DomainError(ValueError):
    """Input outside the domain of a normalization map."""


class RangeError(ValueError):
    """Interpolation query outside the stored time span."""


class InsufficientDataError(ValueError):
    """Series too short for the requested operation."""


class MissingArtifactError(FileNotFoundError):
    """A dataset, model or report the command depends on does not exist."""


class UndefinedMetricError(ArithmeticError):
    """A metric cannot be evaluated on the given series (e.g. no peaks)."""


class NumericalError(ArithmeticError):
    """Base class for solver and training failures."""


class InvalidStateError(NumericalError):
    """Non-finite values reached a routine that requires finite input."""


class StepFailure(NumericalError):
    def __init__(self, stage: int, t: float):
        self.stage = stage
        self.t = t
        super().__init__(f"Non-finite value in stage {stage} of the step starting at t={t!r}")


class NonFiniteStateError(NumericalError):
    def __init__(self, t_last: float, partial=None, stats=None):
        self.t_last = t_last
        self.partial = partial
        self.stats = stats
        super().__init__(f"Non-finite state after t={t_last!r}")


class StepSizeUnderflowError(NumericalError):
    def __init__(self, t: float, dt: float, dt_min: float, partial=None, stats=None):
        self.t = t
        self.dt = dt
        self.dt_min = dt_min
        self.partial = partial
        self.stats = stats
        super().__init__(f"Step size {dt!r} fell below dt_min={dt_min!r} at t={t!r}")


class StiffnessSuspectedError(StepSizeUnderflowError):
    """Raised by the explicit adaptive solver when the step collapses or the step budget runs out."""


class ConvergenceFailure(NumericalError):
    def __init__(self, t: float, dt: float, partial=None, stats=None):
        self.t = t
        self.dt = dt
        self.partial = partial
        self.stats = stats
        super().__init__(f"Newton iteration did not converge at t={t!r} (dt={dt!r}) after a retry with a fresh Jacobian and half the step")


class LinearAlgebraFailure(NumericalError):
    """Singular Newton iteration matrix."""


class InternalInvariantError(NumericalError):
    """A quantity that is positive by construction was found non-positive."""


class TrainingDivergedError(NumericalError):
    def __init__(self, message: str, report: Optional[object] = None):
        self.report = report
        super().__init__(message)
