"""Exception hierarchy shared by all modules."""


class MemkernelError(Exception):
    """Base class for library errors."""


class ValidationError(MemkernelError, ValueError):
    """Malformed input (non-Hermitian matrix, bad order, bad config field)."""


class NumericalError(MemkernelError, ArithmeticError):
    """A numerical routine failed to reach its tolerance or hit a singularity."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ResourceError(MemkernelError, MemoryError):
    """Requested computation exceeds the configured memory or order budget."""


class ConditioningError(NumericalError):
    """A matrix that must be inverted is singular or rank deficient."""


class DataError(MemkernelError, ValueError):
    """Input data cannot be processed (non-positive logs, zero divisors)."""


class RangeError(MemkernelError, ValueError):
    """A tabulated quantity was queried outside its grid."""
