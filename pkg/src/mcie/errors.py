"""Exception types shared across the package."""


class IntegralEquationError(Exception):
    """Base class for all package-specific failures."""


class InvalidSpecError(IntegralEquationError, ValueError):
    """A problem definition, schedule, or config violates a documented contract."""


class NonFiniteKernelError(IntegralEquationError, ArithmeticError):
    """A kernel or forcing term produced NaN or infinity."""


class UnknownCaseError(IntegralEquationError, KeyError):
    """Requested benchmark case id is not registered."""

    def __str__(self) -> str:
        # KeyError would wrap the message in quotes.
        return str(self.args[0]) if self.args else ""
