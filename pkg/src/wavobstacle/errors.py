"""Exception types raised across the package."""


class WavObstacleError(Exception):
    pass


class InvalidDomainError(WavObstacleError, ValueError):
    pass


class OrderOutOfRangeError(WavObstacleError, ValueError):
    pass


class IncompatibleFieldError(WavObstacleError, ValueError):
    pass


class NonFiniteValueError(WavObstacleError, ValueError):
    pass


class SingularSystemError(WavObstacleError, ArithmeticError):
    pass


class NoValidActiveSetError(WavObstacleError, RuntimeError):
    pass


class OutOfRangeTimeError(WavObstacleError, ValueError):
    pass


class ConfigError(WavObstacleError, ValueError):
    pass


class UnknownPresetError(ConfigError):
    pass


class MaxIterationsExceeded(WavObstacleError, RuntimeError):
    """Projected gradient did not reach the requested tolerance.

    The best iterate found so far is kept on ``best`` (a FieldP1) together
    with its projected-gradient residual.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class StepFailure(WavObstacleError, RuntimeError):
    def __init__(self, step, cause):
        super().__init__(f"time step {step} failed: {cause}")
        self.step = step
        self.cause = cause
