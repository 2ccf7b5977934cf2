"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent dimensions, parameters or inputs supplied by the caller."""


class NumericError(ArithmeticError):
    """Non-finite data or a numerical contract that could not be honoured."""
