"""Exception hierarchy shared by every gwroute module."""


class GwrouteError(Exception):
    """Base class for all errors raised by gwroute."""


class UserInputError(GwrouteError):
    """Problems with supplied data or arguments (CLI exit code 1)."""


class NumericalError(GwrouteError):
    """Numerical failures during fitting (CLI exit code 2)."""


class SchemaError(UserInputError):
    pass


class ParseError(UserInputError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class InsufficientDataError(UserInputError):
    pass


class TransformError(UserInputError):
    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class DegenerateColumnError(UserInputError):
    pass


class BandwidthError(UserInputError):
    pass


class CollinearityError(NumericalError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class SaturatedModelError(NumericalError):
    pass


class LocalSingularityError(NumericalError):
    """One or more local regressions could not be solved.

    ``locations`` holds every failing calibration index, not just the first.
    """

    def __init__(self, message, locations=()):
        super().__init__(message)
        self.locations = list(locations)


class SingularNeighbourhoodError(LocalSingularityError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class OptimizationError(NumericalError):
    def __init__(self, message, curve=None):
        super().__init__(message)
        self.curve = curve
