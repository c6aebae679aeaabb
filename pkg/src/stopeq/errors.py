"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` (bad input, CLI exit
code 2) and ``SolverError`` (a well-formed problem the solver could not
finish or that has no answer, CLI exit code 3).
"""


class StopEqError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(StopEqError, ValueError):
    pass


class SolverError(StopEqError):
    pass


# -- input validation -------------------------------------------------------

class DimensionMismatch(ValidationError):
    pass


class NonStochasticRow(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class DuplicateLabel(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class WindowTooNarrow(ValidationError):
    pass


class ConfigParseError(ValidationError):
    """Config file could not be parsed; ``location`` points at the culprit."""

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


# -- solver outcomes --------------------------------------------------------

class HorizonExceeded(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


class StateSpaceTooLarge(SolverError):
    pass


class NoEquilibrium(SolverError):
    pass


class NotAnEquilibrium(SolverError):
    pass


class IntersectionNotEquilibrium(SolverError):
    pass


class DominanceViolation(SolverError):
    pass


class NonConvergentSeries(SolverError):
    def __init__(self, message, value=None, tail_bound=None, terms=None):
        super().__init__(message)
        self.value = value
        self.tail_bound = tail_bound
        self.terms = terms


class EmptyEquilibriumFamily(SolverError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
