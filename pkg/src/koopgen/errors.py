"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 1,
numerical failures with 2.
"""


class KoopgenError(Exception):
    """Base class for all package errors."""


class ConfigError(KoopgenError):
    """Invalid configuration (bad schema, non-integral snapshot count, ...)."""


class NumericalError(KoopgenError):
    """Base class for failures of the numerical machinery."""


class IntegrationDivergedError(NumericalError):
    """Euler-Maruyama produced a non-finite state.

    Carries the path index (i, j) and the global substep at which the
    divergence was detected.
    """

    def __init__(self, i: int, j: int, step: int):
        self.i = i
        self.j = j
        self.step = step
        super().__init__(
            f"integration diverged on path (i={i}, j={j}) at substep {step}"
        )


class DictionaryError(KoopgenError):
    """Dictionary does not provide an observable an operation requires."""


class ClosureError(KoopgenError):
    """Generator action leaves the dictionary span.

    ``observable`` is the exponent tuple of the offending dictionary entry.
    """

    def __init__(self, observable, message=""):
        self.observable = observable
        super().__init__(
            message or f"generator action on observable {observable} leaves the span"
        )


class RankDeficientError(NumericalError):
    """Feature matrix has (numerically) no usable rank."""


class ConditioningError(NumericalError):
    """A linear solve was abandoned because of hopeless conditioning."""

    def __init__(self, message: str, condition_number: float):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3e})")


class KoopmanLogError(NumericalError):
    """Principal matrix logarithm is undefined for the fitted Koopman matrix.

    Raised when an eigenvalue sits on the closed negative real axis or has
    modulus below tolerance; this is the known failure mode of generator
    extraction via the Koopman logarithm under heavy noise.
    """


class EmptyDataError(NumericalError):
    """No valid snapshot pairs (or rows) were available for a fit."""


class InconclusiveAblationWarning(UserWarning):
    """Raised as a warning when fewer than 1% of paths exit the domain."""
