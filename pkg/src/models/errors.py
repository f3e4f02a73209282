from typing import Optional


class DispersionError(Exception):
    """Base class for every error raised by the dispersion-skew packages"""


class ConfigError(DispersionError, ValueError):
    """Invalid option, identifier or configuration value (usage error)"""


class ExpressionSyntaxError(ConfigError):
    """Malformed predictor expression

    Attributes:
        position: 1-based character position of the offending token
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifierError(ConfigError):
    """Identifier used in an expression but declared neither as covariate nor parameter"""

    def __init__(self, name: str, position: int):
        super().__init__(f"Unknown identifier '{name}' at position {position}")
        self.name = name
        self.position = position


class DomainError(DispersionError, ValueError):
    """Value outside the domain of a function, family or link"""


class UnsupportedCapabilityError(DispersionError, ValueError):
    """The family does not provide the requested capability (phi inference, sampler)"""


class SingularInformationError(DispersionError, ArithmeticError):
    """Fisher information for beta is singular or numerically rank deficient"""

    def __init__(self, message: str, condition: Optional[float] = None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class ConvergenceError(DispersionError, RuntimeError):
    """Iteration stopped before the convergence criteria were met

    Attributes:
        diagnostics: Partial result or diagnostic dictionary
    """

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
