"""Exception types shared across the package."""


class NscertError(Exception):
    """Base class for package errors."""


class ConfigError(NscertError, ValueError):
    """Invalid user input: configuration, budgets, file contents."""


class BudgetError(ConfigError):
    """An epsilon budget violates the constraint required by a criterion."""


class NumericalFailure(NscertError, RuntimeError):
    """A computation produced non-finite values or could not proceed."""
