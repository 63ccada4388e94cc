"""Exception hierarchy shared by the fitters, the stacker and the CLI."""


class SurvStackError(Exception):
    """Base class for all errors raised by survstack."""


class DataError(SurvStackError, ValueError):
    """Input data violates a structural requirement."""


class ConfigError(SurvStackError, ValueError):
    """Invalid model or run configuration."""


class ConvergenceError(SurvStackError, RuntimeError):
    """An iterative fitter stopped before meeting its tolerance.

    The ``trace`` attribute holds the per-iteration log-likelihood values.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class SeparationError(ConvergenceError):
    """Coefficients diverge (monotone likelihood)."""


class NoOobTreesError(SurvStackError, LookupError):
    """A subject was in-bag for every tree of a forest."""


class CandidateFitError(SurvStackError, RuntimeError):
    """A candidate model failed while fitting one cross-validation fold."""

    def __init__(self, candidate, fold, cause):
        super().__init__(f"candidate {candidate!r} failed on fold {fold}: {cause}")
        self.candidate = candidate
        self.fold = fold
        self.cause = cause
