"""Exception types shared across the modules."""


class DomainError(ValueError):
    """Input outside the range where an operation is defined."""


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to reach its declared tolerance."""
