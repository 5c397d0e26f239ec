"""
Error types for spatial_match.
"""

from typing import Optional


class SpatialMatchError(Exception):
    """Base exception for all spatial_match errors."""
    pass


class ConfigError(SpatialMatchError):
    """Exception for invalid or incomplete configuration."""
    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DomainError(SpatialMatchError, ValueError):
    """Exception for arguments outside the model's domain (points, levels, dimensions)."""
    pass


class CapacityExceededError(SpatialMatchError):
    """Exception for requests above a configured size cap."""
    def __init__(self, message: str, limit: int, requested: int):
        super().__init__(message)
        self.limit = limit
        self.requested = requested


class ScheduleError(SpatialMatchError):
    """Exception for a threshold schedule that violates the algorithm's input constraints."""
    def __init__(self, message: str, level: Optional[int] = None, value: Optional[float] = None):
        super().__init__(message)
        self.level = level
        self.value = value


class SupplyExhaustedError(SpatialMatchError):
    """Exception raised when a demand unit finds no eligible supply."""
    pass


class InvariantViolationError(SpatialMatchError):
    """Exception for a runtime invariant violated in strict debug mode."""
    def __init__(
        self,
        message: str,
        kind: str,
        level: Optional[int] = None,
        key: Optional[int] = None,
        period: Optional[int] = None
    ):
        super().__init__(message)
        self.kind = kind
        self.level = level
        self.key = key
        self.period = period


class CheckFailedError(SpatialMatchError):
    """Exception for a failed acceptance check."""
    def __init__(self, message: str, criterion: str):
        super().__init__(message)
        self.criterion = criterion
