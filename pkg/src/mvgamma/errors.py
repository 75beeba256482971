"""Semantic exception hierarchy.

Every error names the module that raised it so CLI messages can report the
violated precondition together with its origin.
"""


class MvGammaError(Exception):
    """Base class for all library errors."""

    module = "mvgamma"

    def __init__(self, message, module=None):
        if module is not None:
            self.module = module
        super().__init__(f"[{self.module}] {message}")


class DomainError(MvGammaError):
    """A mathematical precondition is violated (argument outside the
    admissible domain of an operation)."""


class ConvergenceError(MvGammaError):
    """A series or quadrature failed to reach the requested tolerance."""


class InputError(MvGammaError):
    """Malformed user-supplied input (files, CLI arguments, raw matrices)."""


class CorrelationValidationError(InputError):
    """Raised by correlation-matrix validation; ``reason`` is one of
    ``"shape"``, ``"asymmetry"``, ``"diagonal"``, ``"range"``, ``"singular"``.
    """

    def __init__(self, reason, message, module="corrstruct"):
        self.reason = reason
        super().__init__(message, module=module)
