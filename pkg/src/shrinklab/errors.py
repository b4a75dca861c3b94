"""Exception hierarchy.

Two families matter to callers: :class:`ConfigError` for invalid inputs
(the CLI exits with status 2) and :class:`NumericalFailure` for computations
that ran but could not deliver a trustworthy answer (status 3).
"""


class ShrinkLabError(Exception):
    """Base class for all package errors."""

    code = "error"


class ConfigError(ShrinkLabError, ValueError):
    code = "config-error"


class EstimatorMismatch(ConfigError):
    code = "estimator-mismatch"


class VariationUnbounded(ConfigError):
    code = "variation-unbounded"


class NonIntegrableKernel(ConfigError):
    code = "non-integrable-kernel"


class IndifferentMap(ConfigError):
    code = "indifferent-map"


class AtPartitionPoint(ShrinkLabError, ValueError):
    code = "at-partition-point"


class HitsDiscontinuity(ShrinkLabError, ValueError):
    code = "hits-discontinuity"


class NumericalFailure(ShrinkLabError, ArithmeticError):
    code = "numerical-failure"


class InsufficientPrecision(NumericalFailure):
    code = "insufficient-precision"


class NoConvergence(NumericalFailure):
    code = "no-convergence"


class BracketTooWide(NumericalFailure):
    code = "bracket-too-wide"

    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class NonInvertibleBranch(NumericalFailure):
    code = "non-invertible-branch"


class InsufficientSignal(NumericalFailure):
    code = "insufficient-signal"


class CapExceeded(NumericalFailure):
    code = "cap-exceeded"

    def __init__(self, message, skipped=0):
        super().__init__(message)
        self.skipped = skipped


class Undecidable(NumericalFailure):
    code = "undecidable"


class NoScalingWindow(NumericalFailure):
    code = "no-scaling-window"
