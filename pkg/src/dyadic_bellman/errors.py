"""Lab exceptions."""


class LabError(Exception):
    """Base class for every error raised by the lab."""
    pass


class DomainError(LabError, ValueError):
    """Raised when an argument lies outside the mathematical domain.

    Examples: p outside (1, 64], x outside [0, 1] for omega_p, moments
    violating Hölder's inequality, the zero function where f > 0 is needed.
    """
    pass


class UsageError(LabError):
    """Raised when an operation is called in a way its contract forbids."""
    pass


class CapacityError(LabError):
    """Raised when an instance would exceed a size limit."""
    pass


class TreeFormatError(LabError, ValueError):
    """Raised when a tree or function document is malformed."""
    pass


class InvariantViolationError(LabError):
    """Raised when a hard numerical invariant fails at run time."""
    pass


__all__ = [
    "LabError",
    "DomainError",
    "UsageError",
    "CapacityError",
    "TreeFormatError",
    "InvariantViolationError",
]
