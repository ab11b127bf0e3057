"""Exception types raised across the package."""


class EnkfLabError(Exception):
    """Base class for all package errors."""


class InvalidInput(EnkfLabError, ValueError):
    pass


class NotPSD(EnkfLabError, ValueError):
    pass


class SingularObservationNoise(EnkfLabError, ValueError):
    pass


class RankDeficient(EnkfLabError, ValueError):
    pass


class TooFewMembers(EnkfLabError, ValueError):
    pass


class UnsupportedInflation(EnkfLabError, ValueError):
    pass


class DegenerateEigenvalue(EnkfLabError, ValueError):
    pass


class AuditFailed(EnkfLabError, RuntimeError):
    pass


class ConfigError(EnkfLabError, ValueError):
    pass


class NumericalBlowup(EnkfLabError, FloatingPointError):
    """A trajectory left the finite range.

    ``last_state`` holds the last finite state; ``member`` is the ensemble index
    of the offending trajectory (``None`` for the signal or a single state).
    """

    def __init__(self, message, last_state=None, member=None):
        super().__init__(message)
        self.last_state = last_state
        self.member = member
