"""Exception types shared across the package."""


class AccentVCError(Exception):
    """Base class for all package errors."""


class ShapeError(AccentVCError, ValueError):
    """Operand shapes do not conform."""


class DomainError(AccentVCError, ValueError):
    """A value is outside the domain an operation is defined on."""


class InputError(AccentVCError, ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(AccentVCError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class PlanError(ConfigError):
    """A corpus plan violates its constraints."""


class StateError(AccentVCError, RuntimeError):
    """Operation invoked in a state it does not support."""
