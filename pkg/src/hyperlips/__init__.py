"""Audio-driven two-stage talking face generation.

Stage 1 generates a lip-synced base face by modulating a face latent
pyramid with hypernetwork-emitted convolutions conditioned on mel audio;
stage 2 refines it into a high-fidelity face guided by a landmark sketch.
"""

from .audio import Waveform, melspectrogram, mel_window_for_frame, read_wav, \
    write_wav
from .config import PROFILES, LossWeights, Profile, TrainConfig, get_profile
from .checkpoints import load_base_generator, load_checkpoint, \
    load_hr_decoder, load_sync_expert, save_checkpoint
from .data import Stage1Dataset, SyncPairDataset, Stage2PairDataset, \
    load_clip, make_toy_dataset
from .dubbing import DubOptions, dub, face_mask_alpha, fuse
from .faceprep import FaceBox, FaceTriple, LandmarkSet, LipRegion, crop_face, \
    detect_face, detect_landmarks, lip_region, mask_lower_half, paste_back, \
    render_sketch, select_reference
from .metrics import evaluate, lmd, psnr, ssim
from .models import BaseGenerator, HRDecoder, HRVariant, SyncExpert, \
    apply_hyperconv, sync_distance
from .sync import lse_scores, train_sync
from .training import build_stage2_dataset, train_base, train_hr

__version__ = "0.1.0"

__all__ = [
    "Waveform", "melspectrogram", "mel_window_for_frame", "read_wav",
    "write_wav", "PROFILES", "LossWeights", "Profile", "TrainConfig",
    "get_profile", "load_base_generator", "load_checkpoint", "load_hr_decoder",
    "load_sync_expert", "save_checkpoint", "Stage1Dataset", "SyncPairDataset",
    "Stage2PairDataset", "load_clip", "make_toy_dataset", "DubOptions", "dub",
    "face_mask_alpha", "fuse", "FaceBox", "FaceTriple", "LandmarkSet",
    "LipRegion", "crop_face", "detect_face", "detect_landmarks", "lip_region",
    "mask_lower_half", "paste_back", "render_sketch", "select_reference",
    "evaluate", "lmd", "psnr", "ssim", "BaseGenerator", "HRDecoder",
    "HRVariant", "SyncExpert", "apply_hyperconv", "sync_distance",
    "lse_scores", "train_sync", "build_stage2_dataset", "train_base",
    "train_hr", "__version__",
]
