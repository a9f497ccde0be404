"""Exception types shared across the package."""


class FlowSDEError(Exception):
    """Base class for all errors raised by flowsde."""


class DomainError(FlowSDEError, ValueError):
    """A coefficient was requested at a point where it is undefined (a pole)."""


class ConfigError(FlowSDEError, ValueError):
    """An experiment config failed validation.

    ``field`` names the offending key using dotted paths (``p0.variance``).
    """

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
