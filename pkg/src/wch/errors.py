"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument lies outside the set where the quantity is defined."""


class InvalidPotentialError(ValueError):
    """Potential violates the double-well assumptions."""


class NumericalError(RuntimeError):
    """An iterative or quadrature routine failed to converge."""


class CoverageError(ValueError):
    """A radial grid does not reach far enough past the interface."""


class ExtinctionError(RuntimeError):
    """A shrinking radius crossed the extinction floor.

    Attributes
    ----------
    time : float
        Time at which the floor was crossed.
    """

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class DegenerateDimensionError(DomainError):
    """Dimension for which the sphere flow has no shrinking/growing solution."""


class LipschitzViolationError(NumericalError):
    """Picard iterates grew instead of contracting."""


class ContractionError(NumericalError):
    """A fixed-point map failed to contract."""


class ThresholdError(DomainError):
    """Time is not negative enough for a projection denominator to be usable."""


class InstabilityError(RuntimeError):
    """A time stepper left the admissible range.

    Attributes
    ----------
    step : int
        Index of the offending step.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class TopologyError(ValueError):
    """A field does not have exactly one interface where one is expected."""
