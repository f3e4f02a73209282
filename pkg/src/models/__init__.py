from .errors import (
    ConfigError, ConvergenceError, DispersionError, DomainError, ExpressionSyntaxError,
    SingularInformationError, UnknownIdentifierError, UnsupportedCapabilityError,
)
from .family import FamilySpec, Interval, LinkSpec, LocalQuantities
from .fit import FitOptions, FitResult
from .predictor import PredictorModel, parse
from .report import SkewnessReport
from .study import EstimandRow, StudyConfig, StudyReport

__all__ = [
    'ConfigError', 'ConvergenceError', 'DispersionError', 'DomainError', 'ExpressionSyntaxError',
    'SingularInformationError', 'UnknownIdentifierError', 'UnsupportedCapabilityError',
    'FamilySpec', 'Interval', 'LinkSpec', 'LocalQuantities', 'FitOptions', 'FitResult',
    'PredictorModel', 'parse', 'SkewnessReport', 'EstimandRow', 'StudyConfig', 'StudyReport',
]
