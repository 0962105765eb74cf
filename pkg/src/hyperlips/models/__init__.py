from .base_generator import (
    AudioEncoder,
    AudioFeatureSet,
    BaseDiscriminator,
    BaseGenerator,
    FaceDecoder,
    FaceEncoder,
    HyperNet,
    HyperWeightSet,
    LatentPyramid,
    apply_hyperconv,
)
from .hr_decoder import HRDecoder, HRDiscriminator, HRVariant
from .sync_expert import SyncExpert, sync_distance

__all__ = [
    "AudioEncoder", "AudioFeatureSet", "BaseDiscriminator", "BaseGenerator",
    "FaceDecoder", "FaceEncoder", "HyperNet", "HyperWeightSet",
    "LatentPyramid", "apply_hyperconv", "HRDecoder", "HRDiscriminator",
    "HRVariant", "SyncExpert", "sync_distance",
]
