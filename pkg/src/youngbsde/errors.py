class ValidationError(ValueError):
    """Raised when inputs violate an operation's preconditions."""


class NumericalAbort(RuntimeError):
    """Raised when a computation produces a non-finite or divergent state."""
