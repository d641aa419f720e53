"""Exception hierarchy.

Two families map onto CLI exit codes: :class:`ValidationError` (bad input,
exit 1) and :class:`EstimationError` (numerical or statistical failure at run
time, exit 2).
"""


class StratError(Exception):
    """Base class for all package errors."""


class ValidationError(StratError, ValueError):
    """Input rejected before any estimation is attempted."""


class EstimationError(StratError, RuntimeError):
    """Estimation failed on otherwise valid input."""


class SchemaMismatch(ValidationError):
    pass


class InvalidValue(ValidationError):
    def __init__(self, message: str, row: int | None = None) -> None:
        super().__init__(message)
        self.row = row


class EmptyArm(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class BandwidthError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class InvalidShares(ValidationError):
    pass


class InvalidNoise(ValidationError):
    pass


class MissingInstrument(ValidationError):
    pass


class SeparationError(EstimationError):
    pass


class OverlapViolation(EstimationError):
    pass


class WeakFirstStage(EstimationError):
    pass


class SingularJacobian(EstimationError):
    pass


class RejectionBudgetExceeded(EstimationError):
    pass


class QuadratureFailure(EstimationError):
    pass


class AllReplicationsFailed(EstimationError):
    pass
