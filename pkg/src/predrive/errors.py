"""Exception types shared across the package."""


class PredriveError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(PredriveError):
    """Raised when a run configuration or scenario setup is invalid."""


class NumericalError(PredriveError):
    """Raised when a numerical routine fails beyond recovery (e.g. a Gram
    matrix that stays indefinite after jitter escalation)."""
