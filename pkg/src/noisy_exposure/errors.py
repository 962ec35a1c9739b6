"""Exception types raised across the package."""


class ExposureError(Exception):
    """Base class for all package errors."""


class ParameterError(ExposureError, ValueError):
    pass


class InvalidQueryError(ExposureError, ValueError):
    pass


class DimensionError(ExposureError, ValueError):
    pass


class BudgetExhaustedError(ExposureError, RuntimeError):
    pass


class MechanismViolationError(ExposureError, RuntimeError):
    """An oracle produced answers that break its declared perturbation bound."""


class PreconditionError(ExposureError, ValueError):
    pass


class ScaleError(ExposureError, ValueError):
    """Requested problem size is beyond the configured feasibility cap."""


class DomainError(ExposureError, ValueError):
    """A closed-form bound was evaluated outside its domain."""


class IngestionError(ExposureError, ValueError):
    pass


class UndefinedConcentrationError(ExposureError, ValueError):
    pass


class UndefinedRatioError(ExposureError, ValueError):
    pass


class ScenarioError(ExposureError, ValueError):
    """Scenario file failed to parse or validate.

    ``line`` is the 1-based line in the source document when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
