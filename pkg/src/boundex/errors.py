"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class IntegrationError(RuntimeError):
    """Population integration left the probability simplex."""


class CalibrationError(RuntimeError):
    """A calibration root could not be bracketed."""


class FormatError(ValueError):
    """A time-tag file is malformed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """Run configuration failed validation; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
