"""Exception hierarchy shared across the package."""


class StepRobustError(Exception):
    """Base class for all package errors."""


class InputDomainError(StepRobustError, ValueError):
    """An argument is outside the operation's admissible domain."""


class NumericalConditioningError(StepRobustError):
    """A linear solve was requested on a matrix that is effectively singular."""


class ImpactSingularityError(NumericalConditioningError):
    """The impact block system is singular at the given pre-impact configuration."""

    def __init__(self, message, q_minus=None):
        super().__init__(message)
        self.q_minus = q_minus


class ControllerSingularityError(NumericalConditioningError):
    """The output decoupling matrix is singular; torque is undefined."""


class OutsideSectionError(StepRobustError):
    """A return-map evaluation left the region where time-to-impact is defined."""

    def __init__(self, message, termination=None):
        super().__init__(message)
        self.termination = termination


class ReconstructionError(StepRobustError):
    """No full guard state is consistent with the requested reduced state."""


class FixedPointNotFoundError(StepRobustError):
    """Newton iteration on the return map failed to converge."""

    def __init__(self, message, best_residual=None, best_state=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_state = best_state


class SynthesisFailedError(StepRobustError):
    """No shooting start converged to a valid gait."""

    def __init__(self, message, best_residuals=None):
        super().__init__(message)
        self.best_residuals = best_residuals
