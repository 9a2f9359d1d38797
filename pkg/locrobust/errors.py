"""
Exception hierarchy shared by all locrobust modules.
"""


class LocRobustError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidAngleError(LocRobustError, ValueError):
    pass


class EmptyRouteError(LocRobustError, ValueError):
    pass


class DegenerateAlignmentError(LocRobustError, ValueError):
    """Rotation is unobservable from the given correspondences."""


class CovarianceError(LocRobustError, ValueError):
    """Covariance matrix is not symmetric positive semi-definite."""


class SingularInnovationError(LocRobustError):
    """Innovation covariance cannot be inverted; the update is rejected."""


class InitialisationError(LocRobustError):
    """No qualifying GPS fix pair was found to initialise the filter."""


class MisalignedSliceError(LocRobustError, ValueError):
    pass


class CutoffNotReachedError(LocRobustError):
    """The PAU curve never drops to the requested probability."""

    def __init__(self, probability: float):
        super().__init__(f"PAU curve never reaches p={probability}")
        self.probability = probability


class GridMismatchError(LocRobustError, ValueError):
    pass


class EmptyWindowSetError(LocRobustError, ValueError):
    pass


class EmptyOverlapError(LocRobustError, ValueError):
    pass


class ManifestError(LocRobustError):
    pass
