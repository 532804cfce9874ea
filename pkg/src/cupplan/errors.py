"""Exception hierarchy shared by all cupplan modules."""


class CupPlanError(Exception):
    """Base class for all errors raised by this package."""


class FrameMismatch(CupPlanError):
    """Transform frame labels do not chain."""


class ZeroVector(CupPlanError):
    """A direction vector has (near-)zero norm."""


class BehindCamera(CupPlanError):
    """Point has non-positive depth in the camera frame."""


class LengthMismatch(CupPlanError):
    """Paired point lists have different lengths."""


class DegenerateConfiguration(CupPlanError):
    """Point set is (near-)collinear; registration is under-determined."""


class MarkerMismatch(CupPlanError):
    """Observations refer to different markers."""


class MarkerOutOfView(CupPlanError):
    """Marker lies outside the sensor frustum."""


class SpecOutOfBounds(CupPlanError):
    """Phantom primitive lies outside the block."""


class BadRange(CupPlanError):
    """Angle range is empty or step does not divide it."""


class BadResolution(CupPlanError):
    """Mesh resolution below the supported minimum."""


class GimbalDegenerate(CupPlanError):
    """Cup axis is (anti)parallel to the anterior axis; inclination undefined."""


class EmptyContour(CupPlanError):
    """Silhouette threshold selected no vertices."""


class DegenerateBaseline(CupPlanError):
    """Stereo pair has (near-)zero baseline."""


class ParallelRays(CupPlanError):
    """Triangulation rays are (near-)parallel."""


class SessionCommitted(CupPlanError):
    """Mutation attempted on a committed planning session."""


class RotationLocked(CupPlanError):
    """Rotation delta rejected while orientation preset is active."""


class NoGroundTruth(CupPlanError):
    """Operation needs a ground-truth pose the session does not have."""


class BudgetExhausted(CupPlanError):
    """Optimizer stopped on its evaluation budget before converging."""


class TooFewPoints(CupPlanError):
    """Not enough points for a stable fit."""


class IllConditioned(CupPlanError):
    """Covariance spectrum too isotropic for a principal axis."""


class NothingVisible(CupPlanError):
    """No sensor ray hits the object."""


class GridMismatch(CupPlanError):
    """Point-cloud frames come from different sensor grids."""
