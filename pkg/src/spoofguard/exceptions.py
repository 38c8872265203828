"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario configuration is malformed or violates an invariant."""


class NumericalError(RuntimeError):
    """A linear-algebra operation failed (singular system, no solution)."""


class ConvergenceError(NumericalError):
    """An iteration exhausted its budget before reaching its tolerance.

    Carries the last iterate and the residual at the point of failure so
    callers can inspect how close the iteration got.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
