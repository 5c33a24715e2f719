"""Exception types shared across the package."""


class IndexOutOfRange(ValueError):
    """A host index falls outside [0, n)."""


class SelfLoop(ValueError):
    """An edge (i, i) was supplied."""


class InvalidProbability(ValueError):
    """A probability parameter is outside [0, 1]."""


class TooManyViruses(ValueError):
    """Set enumeration is exponential in the virus count; capped at 16."""


class AlreadyInfected(ValueError):
    """Infection target already carries the virus."""


class Extinct(RuntimeError):
    """No event is enabled; the chain is absorbed."""


class StateSpaceTooLarge(ValueError):
    """Joint state space exceeds the exact-solver cap."""


class StepTooLarge(RuntimeError):
    """An integration step left the admissible box; halve the step."""


class MultiVirusUnsupported(ValueError):
    """The non-monotone patching law is defined for a single virus."""


class SingularLyapunov(RuntimeError):
    """Lyapunov equation is singular (eigenvalue on the imaginary axis)."""


class NotConverged(RuntimeError):
    """Optimization hit its iteration cap without a feasible iterate."""


class DomainError(ValueError):
    """Bound formula evaluated outside its validity region."""


class ConfigError(ValueError):
    """Scenario or model file rejected; carries the offending field path."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


class NotSymmetric(ValueError):
    """Matrix handed to the symmetric eigensolver is not symmetric."""
