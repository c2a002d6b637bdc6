"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """A numerical operation failed, e.g. rank-deficient whitener (CLI exit code 3)."""
