"""Exception types raised across the package."""


class GBError(Exception):
    """Base class for all package errors."""


class NonTrappingUncertain(GBError):
    """A sampled ray stayed inside |x| <= 2R up to the integration limit."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StepTooLarge(GBError):
    """Hamiltonian drift exceeded the tolerance at the finest allowed step."""


class SingularFrame(GBError):
    """det B fell below the safety threshold along a ray."""


class BadInitialHessian(GBError, ValueError):
    """Initial phase Hessian violates symmetry, compatibility or positivity."""


class AmbiguousProjection(GBError):
    """The tube radius is too large for a unique closest point on the ray."""


class OutsideTube(GBError):
    """The query point is not within the beam tube."""


class SingularPoint(GBError, ValueError):
    """Green's kernel evaluated at the origin."""


class MediumNotConstant(GBError):
    """An exact reference was requested for a variable medium."""


class OnSourcePlane(GBError, ValueError):
    """The oscillatory integral was requested on the source plane x1 = 0."""


class ResolutionGuard(GBError):
    """Grid spacing is too coarse for the wave number of the field."""


class DegenerateFit(GBError, ValueError):
    """Log-log fit requested on unusable data."""


class TrajectoryFailure(GBError):
    """Ray integration failed during a probe."""


class EmptyOverlap(GBError):
    """Two beam tubes had no sampled points in common."""


class ConfigError(GBError, ValueError):
    """Experiment configuration failed validation."""
