"""Exception hierarchy for the steady-state response solver."""


class SSRError(Exception):
    """Base class for all solver errors."""


class ModelError(SSRError, ValueError):
    """Invalid mechanical model (asymmetric matrices, indefinite mass, ...)."""


class NondiagonalizableError(SSRError):
    """The first-order pencil (A, B) is defective or nearly so."""


class ProportionalityError(SSRError):
    """Damping matrix is not diagonalized by the undamped modes."""


class ResonanceError(SSRError):
    """A non-resonance condition is violated."""

    def __init__(self, message, kappa=None):
        super().__init__(message)
        self.kappa = kappa


class StabilityError(SSRError):
    """An eigenvalue has nonnegative real part where decay is required."""


class InternalError(SSRError):
    pass


class DiscretizationError(SSRError, ValueError):
    """Grid or index-set settings are not admissible."""


class ConvergenceError(SSRError):
    """Iteration failed; carries the trace collected so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class Diverged(ConvergenceError):
    pass


class MaxIter(ConvergenceError):
    pass


class SingularJacobian(ConvergenceError):
    pass


class BothFailed(ConvergenceError):
    def __init__(self, message, picard_trace=None, newton_trace=None):
        super().__init__(message, trace=newton_trace)
        self.picard_trace = picard_trace
        self.newton_trace = newton_trace


class BranchPointError(SSRError):
    """Tangent computation found a rank drop beyond corank one."""


class StepFailed(SSRError):
    pass


class SeedRejected(SSRError):
    pass


class TransientNotDecayed(SSRError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(SSRError, ValueError):
    """Configuration parse or validation failure; ``problems`` lists every issue."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])
