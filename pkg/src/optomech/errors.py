"""Exception hierarchy shared by all modules."""


class OptomechError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(OptomechError, ValueError):
    pass


class NoExceptionalPoint(OptomechError):
    """Raised when gamma0 != gamma2, so the two eigenvalues never coalesce."""


class WeakCouplingError(OptomechError):
    """Raised when the parametric frequency is imaginary (drive past the EP)."""


class UnstableFixedPoint(OptomechError):
    """Raised when the subthreshold stationary state is requested above threshold."""


class BracketError(OptomechError):
    pass


class DivergenceError(OptomechError):
    """Integration exceeded the overflow guard.

    The samples recorded up to the blow-up are kept on ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class WindowError(OptomechError):
    pass


class FitError(OptomechError):
    pass


class ConfigError(OptomechError):
    """Configuration problem; ``key`` and ``line`` locate it when known."""

    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where += f" [key {key!r}"
            where += f", line {line}]" if line is not None else "]"
        super().__init__(message + where)
        self.key = key
        self.line = line
