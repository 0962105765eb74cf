"""Exception types raised across the pipeline.

Every error the package raises deliberately derives from HyperLipsError so
callers (and the CLI) can distinguish pipeline failures from programming bugs.
"""


class HyperLipsError(Exception):
    """Base class for all errors raised by this package."""


# --- media ---------------------------------------------------------------

class UnreadableMedia(HyperLipsError):
    """The media tool could not decode the given file."""


class NoAudioTrack(HyperLipsError):
    """The input has no decodable audio."""


class TooShort(HyperLipsError):
    """Waveform shorter than one analysis window."""


class IndexOutOfRange(HyperLipsError):
    """Frame index outside the clip."""


class WriteFailure(HyperLipsError):
    """Output file or directory could not be written."""


class DurationMismatch(HyperLipsError):
    """Video frame count inconsistent with audio duration."""


# --- faces ---------------------------------------------------------------

class NoFace(HyperLipsError):
    """No face found in a frame."""


class NoFaceInVideo(HyperLipsError):
    """Every frame of a video is faceless."""


class DegenerateBox(HyperLipsError):
    """Face box has zero area or lies outside the frame."""


class EmptySequence(HyperLipsError):
    """A nonempty frame sequence was required."""


class LandmarkFailure(HyperLipsError):
    """Landmark detection failed on a face image."""


class MissingLipLandmarks(HyperLipsError):
    """Landmark set lacks usable lip points."""


# --- models / losses -----------------------------------------------------

class ShapeMismatch(HyperLipsError):
    """Tensor shape incompatible with the operation's contract."""


class WeightShapeMismatch(HyperLipsError):
    """Generated weight set does not match the latent pyramid."""


class ExtractorUnavailable(HyperLipsError):
    """The requested perceptual feature extractor cannot be constructed."""


class EmptyLipRegion(HyperLipsError):
    """Lip region bounding box is degenerate."""


# --- training / scoring --------------------------------------------------

class EmptyDataset(HyperLipsError):
    """Training requires a nonempty dataset."""


class MissingSyncExpert(HyperLipsError):
    """Stage-1 training requires a sync expert checkpoint."""


class NotEnoughFrames(HyperLipsError):
    """Sync scoring needs at least one full 5-frame window."""


class NoSyncModel(HyperLipsError):
    """Sync scoring requires a loaded sync expert."""


class NoValidFrames(HyperLipsError):
    """Every frame failed landmark detection; a metric has no support."""


# --- checkpoints ---------------------------------------------------------

class VersionMismatch(HyperLipsError):
    """Checkpoint format version (or tagged content) is incompatible."""


class CorruptArchive(HyperLipsError):
    """Checkpoint file is unreadable or truncated."""


# --- cli -----------------------------------------------------------------

class UsageError(HyperLipsError):
    """Bad command-line usage (maps to exit code 1)."""
