"""Typed errors shared across the engine.

Estimators raise EmptyArm / InfiniteWeight instead of returning NaN; the
bootstrap layer owns the redraw policy for those.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class IngestError(EngineError):
    """Raw table could not be ingested (missing column, bad coding, ...)."""


class ScenarioError(EngineError):
    """Scenario construction or validation failed."""


class FitError(EngineError):
    """A model fit failed. Retryable inside the bootstrap."""


class SingularMatrixError(FitError):
    """Weighted normal equations singular; carries a collinearity diagnostic."""

    def __init__(self, message, collinear_columns=None):
        super().__init__(message)
        self.collinear_columns = list(collinear_columns or [])


class EstimatorError(EngineError):
    """Base class for estimator failures."""


class EmptyArmError(EstimatorError):
    """A treatment arm has no rows."""

    def __init__(self, arm):
        super().__init__(f"empty treatment arm: x={arm}")
        self.arm = arm


class InfiniteWeightError(EstimatorError):
    """A fitted propensity hit exactly 0 or 1, so an IPTW weight is infinite."""

    def __init__(self, n_bad):
        super().__init__(f"{n_bad} fitted propensities are exactly 0 or 1")
        self.n_bad = n_bad


class BootstrapFailure(EngineError):
    """The bootstrap redraw budget was exhausted; carries diagnostics."""

    def __init__(self, message, replicate=None, attempts=None, last_error=None):
        super().__init__(message)
        self.replicate = replicate
        self.attempts = attempts
        self.last_error = last_error


class ProtocolError(EngineError):
    """External model server spoke protocol v1 incorrectly or reported an error."""
