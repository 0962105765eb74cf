"""Configuration: architecture profiles, audio constants, and run configs.

Run configs live in INI-style files ("key = value" under sections); CLI flags
override file values. Every run writes back the fully resolved config so a
checkpoint can always be traced to the exact settings that produced it.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

# Audio front-end constants. 16 kHz mono audio, 80-bin mel windows of 800
# samples with hop 200 give 80 mel steps per second; one video frame at 25 fps
# spans 3.2 mel steps and each conditioning chunk covers 16 steps (200 ms).
SAMPLE_RATE = 16000
FPS = 25
N_MELS = 80
MEL_WINDOW = 800
MEL_HOP = 200
MEL_FMIN = 55.0
MEL_FMAX = 7600.0
MEL_AMP_FLOOR = 1e-5
MEL_CHUNK_STEPS = 16
MEL_STEPS_PER_FRAME = N_MELS / FPS  # 3.2

SYNC_WINDOW_FRAMES = 5

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Profile:
    """Architecture profile fixing every size that is not a free parameter."""

    name: str
    face_size: int
    enc_channels: tuple[int, int, int, int]
    audio_pooled_dim: int
    hyper_hidden_dim: int
    sync_embed_dim: int
    hr_width: int
    hyperconv_kernel: int = 1

    @property
    def pyramid_sizes(self) -> tuple[int, int, int, int]:
        s = self.face_size
        return (s // 2, s // 4, s // 8, s // 16)


PROFILES: dict[str, Profile] = {
    "full": Profile(
        name="full",
        face_size=128,
        enc_channels=(32, 64, 128, 256),
        audio_pooled_dim=512,
        hyper_hidden_dim=512,
        sync_embed_dim=512,
        hr_width=64,
    ),
    "toy": Profile(
        name="toy",
        face_size=32,
        enc_channels=(8, 16, 32, 64),
        audio_pooled_dim=128,
        hyper_hidden_dim=128,
        sync_embed_dim=64,
        hr_width=32,
    ),
}


def get_profile(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")


@dataclass
class LossWeights:
    """Scalar weights for the two training objectives."""

    base_adv: float = 0.2
    base_recon: float = 0.5
    base_lpips: float = 0.5
    base_sync: float = 0.3
    hr_adv: float = 1.0
    hr_perceptual: float = 1.0
    hr_recon: float = 1.0
    hr_lip: float = 1.0

    def __post_init__(self) -> None:
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be >= 0, got {v}")


@dataclass
class TrainConfig:
    """Everything a training run needs; seed fixes all sampling."""

    profile: str = "toy"
    batch_size: int = 4
    steps: int = 2000
    learning_rate: float = 1e-4
    seed: int = 1234
    dataset_dir: str = ""
    run_dir: str = ""
    sync_ckpt: str = ""  # frozen sync expert used by the stage-1 sync loss
    reference_policy: str = "random"  # random (training) | fixed (inference)
    hr_scale: int = 1
    extractor: str = "tiny"
    log_every: int = 10
    checkpoint_every: int = 500
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


def _flatten(cfg: TrainConfig) -> dict[str, dict[str, object]]:
    d = asdict(cfg)
    weights = d.pop("weights")
    return {"train": d, "weights": weights}


def config_hash(cfg: TrainConfig) -> str:
    """Stable hash of the resolved config, recorded inside checkpoints."""
    blob = json.dumps(_flatten(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    for section, values in _flatten(cfg).items():
        parser[section] = {k: str(v) for k, v in values.items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path: str | Path) -> TrainConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    defaults = TrainConfig()
    kw: dict[str, object] = {}
    if parser.has_section("train"):
        sec = parser["train"]
        for f in (
            "profile", "dataset_dir", "run_dir", "sync_ckpt",
            "reference_policy", "extractor",
        ):
            if f in sec:
                kw[f] = sec[f]
        for f in ("batch_size", "steps", "seed", "hr_scale", "log_every",
                  "checkpoint_every"):
            if f in sec:
                kw[f] = sec.getint(f)
        if "learning_rate" in sec:
            kw["learning_rate"] = sec.getfloat("learning_rate")
    weights = LossWeights()
    if parser.has_section("weights"):
        wsec = parser["weights"]
        wkw = {k: wsec.getfloat(k) for k in asdict(weights) if k in wsec}
        weights = LossWeights(**wkw)
    return replace(defaults, weights=weights, **kw)
