"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class SynergyError(Exception):
    exit_code = 1


class ConfigError(SynergyError, ValueError):
    exit_code = 2


class SchemaError(ConfigError):
    """Input file does not match the declared column schema."""


class DataError(SynergyError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateRecordError(ParseError):
    pass


class DateError(ParseError):
    pass


class DegenerateCohortError(DataError):
    pass


class AssemblyError(DataError):
    pass


class ZeroBaselineError(DataError, ZeroDivisionError):
    pass


class OrderingError(DataError):
    pass


class DimensionError(SynergyError, ValueError):
    exit_code = 2


class InsufficientDataError(DataError):
    pass


class NumericalError(SynergyError, ArithmeticError):
    exit_code = 4


class CovarianceError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class UndefinedMetricError(NumericalError):
    pass
