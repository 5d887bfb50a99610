"""
Exception hierarchy shared by every app of the laboratory.
"""


class LabError(Exception):
    """Base exception for laboratory errors."""
    pass


class InvalidFieldError(LabError):
    """Raised when a field holds NaN/Inf or has the wrong shape."""
    pass


class GridMismatchError(LabError):
    """Raised when two fields live on different grids."""
    pass


class SolvabilityError(LabError):
    """Raised when a Poisson right-hand side violates the zero-mean condition."""
    pass


class FieldRangeError(LabError):
    """Raised when an exponential would overflow (unresolved concentration)."""
    pass


class DegenerateWeightError(LabError):
    """Raised when h is negative somewhere or the weighted mass vanishes."""
    pass


class GeometryError(LabError):
    """Raised when a requested radius or window exceeds the chart of the torus."""
    pass


class NumericalFailure(LabError):
    """Raised when time stepping cannot proceed (step size underflow, solver breakdown)."""
    pass


class SubcriticalConstructionError(LabError):
    """Raised when no epsilon in the scan pushes J below C0."""

    def __init__(self, message, scan=None):
        super().__init__(message)
        self.scan = scan or []


class ConfigurationError(LabError):
    """Raised for unreadable or invalid run configurations."""
    pass
