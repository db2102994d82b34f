"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class InvalidArgumentError(ValueError):
    """Arguments are individually fine but inconsistent with each other."""


class ResourceLimitError(RuntimeError):
    """An exact computation would exceed a configured size cap."""


class ConfigurationError(RuntimeError):
    """A run configuration cannot satisfy a required precondition."""


class ValidationError(ValueError):
    """An operator failed its normalization or Carleson check."""

    def __init__(self, message, *, where=None, value=None):
        super().__init__(message)
        self.where = where
        self.value = value


class KernelEvaluationError(ArithmeticError):
    """A kernel returned a non-finite value at a pair of atoms that needs it."""
