"""Exception hierarchy shared by all modules."""


class FieldCLTError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(FieldCLTError, ValueError):
    pass


class BoundsError(FieldCLTError, IndexError):
    pass


class DomainError(FieldCLTError, ValueError):
    pass


class PreconditionError(FieldCLTError, ValueError):
    pass


class ParameterError(FieldCLTError, ValueError):
    pass


class UnsupportedModelError(FieldCLTError, TypeError):
    pass


class DivergenceError(FieldCLTError, ArithmeticError):
    """Raised when a coefficient family is not square-summable."""


class DegeneracyError(FieldCLTError, ValueError):
    pass


class CapacityError(FieldCLTError, MemoryError):
    """An exact enumeration would exceed the supported outcome count."""


class ConfigError(FieldCLTError, ValueError):
    """Configuration text failed validation.

    ``violations`` holds every problem found, each prefixed with its line
    number, so a single run reports all of them.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
