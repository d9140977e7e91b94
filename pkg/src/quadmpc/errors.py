"""Exception and warning types shared across the package."""


class QuadMpcError(Exception):
    """Base class for all package errors."""


class GimbalLock(QuadMpcError):
    """Pitch too close to +-pi/2; the Euler-rate map is singular there."""


class InvalidConfig(QuadMpcError):
    """A configuration value is out of its admissible range."""


class NonFinite(QuadMpcError):
    """An input contained NaN or Inf."""


class DimensionMismatch(QuadMpcError):
    """Array shapes are inconsistent with the problem dimensions."""


class SingularComparator(QuadMpcError):
    """The hindsight least-squares comparator could not be solved."""


class NumericalBlowup(QuadMpcError):
    """Plant state norm exceeded the divergence threshold; run is failed."""


class EmptyLog(QuadMpcError):
    """A metric was requested on a log with no records."""


class MismatchedRuns(QuadMpcError):
    """Two runs being compared differ in more than the controller variant."""


class UnreachableFoothold(UserWarning):
    """A planned foothold exceeded the leg reach radius and was clamped."""
