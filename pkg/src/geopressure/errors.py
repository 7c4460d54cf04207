"""Exception types shared across the workbench."""


class GeoPressureError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GeoPressureError, ValueError):
    """A configuration value is missing, malformed or outside its safe range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ComputationError(GeoPressureError, RuntimeError):
    """A numerical procedure could not produce a trustworthy result."""


class OutOfDomain(ComputationError):
    pass


class CylinderBudgetExceeded(ComputationError):
    pass


class BranchBudgetExceeded(ComputationError):
    pass


class OrbitHitsCritical(ComputationError):
    pass


class BoundaryHit(ComputationError):
    pass


class NotMarkov(ComputationError):
    pass


class EmptyTree(ComputationError):
    pass


class DivergentNegativeT(ComputationError):
    pass


class GridTooCoarse(ComputationError):
    pass


class NoZeroInRange(ComputationError):
    pass


class NoSignChange(ComputationError):
    pass


class Divergent(ComputationError):
    pass


class VerificationFailed(ComputationError):
    pass


class NoSuitableOrbit(ComputationError):
    pass


class IntervalNotInjective(ComputationError):
    pass
