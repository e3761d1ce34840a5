"""Exception hierarchy shared by all radar_forge modules."""


class RadarForgeError(Exception):
    """Base class for every error raised by this package."""


# -- geometry -----------------------------------------------------------------

class ZeroVector(RadarForgeError):
    """A direction or point with zero norm where a direction is required."""


class BehindCamera(RadarForgeError):
    """Point has non-positive camera-frame depth and cannot be projected."""


class NonRigidTransform(RadarForgeError):
    """Rotation block fails orthonormality or determinant checks."""


class InvalidIntrinsics(RadarForgeError):
    """Camera intrinsics with non-positive focal lengths."""


# -- distributions and sampling -----------------------------------------------

class InsufficientData(RadarForgeError):
    """Not enough observations to estimate the requested statistic."""


class EmptyPointSet(RadarForgeError):
    """A mixture cannot be rasterized from zero points."""


class DimensionMismatch(RadarForgeError):
    """Two grids that must share dimensions do not."""


class EmptyInput(RadarForgeError):
    """An aggregate over an empty collection."""


class NonPositiveCount(RadarForgeError):
    """A ground-truth signal count that is not a positive integer."""


class AllZeroGrid(RadarForgeError):
    """A grayscale grid with no nonzero cell cannot define a distribution."""


class InvalidGrid(RadarForgeError):
    """A probability grid failing normalization or shape requirements."""


class OutOfRange(RadarForgeError):
    """A scalar outside its documented open or closed interval."""


# -- synthesis ----------------------------------------------------------------

class EmptyNeighborhood(RadarForgeError):
    """Range estimation requested on an empty lidar neighborhood."""


class AnchorOutOfImage(RadarForgeError):
    """Patch anchor pixel falls outside the source image."""


# -- neural network kernel ----------------------------------------------------

class ShapeMismatch(RadarForgeError):
    """Tensor shapes inconsistent with the declared layer geometry."""


class LengthMismatch(RadarForgeError):
    """Paired sequences of different lengths."""


class DegenerateRange(RadarForgeError):
    """Normalization interval with a_max <= a_min."""


class EmptyDataset(RadarForgeError):
    """Training requested on an empty sample set."""


class NonFiniteValue(RadarForgeError):
    """A NaN or Inf appeared in a tensor that must stay finite."""


# -- predictors ---------------------------------------------------------------

class NoGroundTruth(RadarForgeError):
    """Frame lacks the ground-truth datagram required by this predictor."""


class EmptyLidar(RadarForgeError):
    """No lidar points available inside the camera field of view."""


# -- dataset I/O --------------------------------------------------------------

class ParseError(RadarForgeError):
    """Malformed input file; message carries path and line/row context."""


class RangeViolation(ParseError):
    """Datagram rows whose values violate the signal invariants."""


class TruncatedFile(RadarForgeError):
    """Binary file length inconsistent with its record size."""


class UnsupportedFormat(RadarForgeError):
    """File format or variant this package deliberately does not read."""


class CorruptHeader(RadarForgeError):
    """Header bytes of a binary format could not be parsed."""


class FrameIdMismatch(RadarForgeError):
    """Prediction and ground-truth frame id sets do not line up."""
