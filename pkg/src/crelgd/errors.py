"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for configuration problems, 3 for bad or insufficient data, 4 for
numerical failures.
"""


class CrelgdError(Exception):
    exit_code = 1


class ConfigError(CrelgdError, ValueError):
    exit_code = 2


class InvalidSpecError(ConfigError):
    pass


class InvalidWindowError(ConfigError):
    pass


class DataError(CrelgdError, ValueError):
    exit_code = 3


class CsvFormatError(DataError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class TooFewObservationsError(DataError):
    pass


class ConstantSeriesError(DataError):
    pass


class DomainError(DataError):
    pass


class ShapeError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class CoverageError(DataError):
    def __init__(self, series_name, missing_months):
        self.series_name = series_name
        self.missing_months = list(missing_months)
        shown = ", ".join(str(m) for m in self.missing_months[:12])
        more = "" if len(self.missing_months) <= 12 else f" (+{len(self.missing_months) - 12} more)"
        super().__init__(f"series {series_name!r} has no value at: {shown}{more}")


class MissingQuarterError(DataError):
    pass


class ComparisonError(DataError):
    pass


class NumericalError(CrelgdError, ArithmeticError):
    exit_code = 4


class RankDeficiencyError(NumericalError):
    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"design matrix is rank deficient; offending columns: {self.columns}")
