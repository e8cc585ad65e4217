"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (shape, index range, sign)."""


class EvaluationError(ArithmeticError):
    """A field produced a non-finite value; carries the offending component."""

    def __init__(self, message: str, component: tuple[int, ...] | None = None, point=None):
        super().__init__(message)
        self.component = component
        self.point = point


class SingularityError(ArithmeticError):
    """A matrix field is not invertible at some evaluation point."""

    def __init__(self, message: str, index: int | None = None, point=None):
        super().__init__(message)
        self.index = index
        self.point = point


class ConfigurationError(ValueError):
    """A scenario or sector configuration is inconsistent."""
