"""Synthetic toy dataset and the dataset objects the trainers consume.

A toy clip is a frame-directory video of one analytic face whose mouth
opening follows the envelope of a synthesized tone. Audio is the only
signal that carries mouth state across frames (the head never moves inside
a clip), so a generator that learns the task must be using the audio path.
Every clip ships its ground truth: face box, per-frame landmarks, and
per-frame mouth heights.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.interpolate import PchipInterpolator
from torch.utils.data import Dataset

from . import media, toyface
from .audio import MelSpectrogram, Waveform, melspectrogram, \
    mel_step_for_frame, mel_window_for_frame
from .config import FPS, MEL_CHUNK_STEPS, SAMPLE_RATE, SYNC_WINDOW_FRAMES, Profile
from .errors import EmptyDataset, WriteFailure
from .faceprep import crop_face, mask_lower_half
from .toyface import ToyFaceParams

SAMPLES_PER_FRAME = SAMPLE_RATE // FPS  # 640

FRAME_SIZE = 96
CARRIER_HZ = 220.0


def synth_envelope(rng: np.random.Generator, n_frames: int,
                   silent: bool = False) -> np.ndarray:
    """Per-sample amplitude envelope in [0, 1], piecewise smooth at ~4 Hz.

    Redraws control points until the per-frame envelope has useful variance,
    so no clip ends up accidentally monotone.
    """
    n_samples = n_frames * SAMPLES_PER_FRAME
    if silent:
        return np.zeros(n_samples, dtype=np.float32)
    knot_every = SAMPLE_RATE // 4
    n_knots = n_samples // knot_every + 2
    t_knots = np.arange(n_knots) * knot_every
    for _ in range(20):
        values = rng.uniform(0.0, 1.0, n_knots)
        values[rng.uniform(size=n_knots) < 0.25] = 0.0  # occasional silence
        env = PchipInterpolator(t_knots, values)(np.arange(n_samples))
        env = np.clip(env, 0.0, 1.0).astype(np.float32)
        per_frame = env.reshape(n_frames, SAMPLES_PER_FRAME).mean(axis=1)
        if per_frame.std() > 0.12:
            return env
    return env


def synth_toy_clip(out_dir: str | Path, rng: np.random.Generator,
                   n_frames: int = 64, silent: bool = False) -> dict:
    """Write one clip (frames, wav, truth arrays) and return its metadata."""
    out_dir = Path(out_dir)
    env = synth_envelope(rng, n_frames, silent=silent)
    t = np.arange(len(env)) / SAMPLE_RATE
    wave = (0.75 * env * np.sin(2 * np.pi * CARRIER_HZ * t)).astype(np.float32)

    mouth_open = env.reshape(n_frames, SAMPLES_PER_FRAME).mean(axis=1)
    cx = rng.uniform(44.0, 52.0)
    cy = rng.uniform(42.0, 50.0)
    rx = rng.uniform(26.0, 30.0)
    ry = rng.uniform(28.0, 32.0)

    frames = []
    landmarks = np.zeros((n_frames, toyface.SCHEMA.n_points, 2), np.float32)
    heights = np.zeros(n_frames, np.float32)
    for i in range(n_frames):
        params = ToyFaceParams(cx, cy, rx, ry, float(mouth_open[i]))
        frames.append(toyface.render_toy_face(FRAME_SIZE, FRAME_SIZE, params))
        landmarks[i] = toyface.toy_landmarks(params)
        heights[i] = toyface.mouth_height_px(params)

    box = ToyFaceParams(cx, cy, rx, ry, 0.0).box
    try:
        media.write_video(media.FrameStream(frames), Waveform(wave), out_dir)
        truth = out_dir / "truth"
        truth.mkdir(exist_ok=True)
        np.save(truth / "box.npy",
                np.array([box.x, box.y, box.w, box.h], np.int64))
        np.save(truth / "landmarks.npy", landmarks)
        np.save(truth / "mouth_open.npy", mouth_open.astype(np.float32))
        np.save(truth / "mouth_heights.npy", heights)
    except OSError as exc:
        raise WriteFailure(f"cannot write clip to {out_dir}: {exc}") from exc
    return {"frames": n_frames, "box": [box.x, box.y, box.w, box.h],
            "silent": bool(silent)}


def make_toy_dataset(n_clips: int, seed: int, out_dir: str | Path,
                     n_frames: int = 64) -> Path:
    """Generate a seed-deterministic dataset of n_clips toy clips."""
    if n_clips < 1:
        raise ValueError(f"n_clips must be >= 1, got {n_clips}")
    out_dir = Path(out_dir)
    clips_meta = {}
    for i in range(n_clips):
        rng = np.random.default_rng([seed, i])
        name = f"clip_{i:04d}"
        clips_meta[name] = synth_toy_clip(out_dir / "clips" / name, rng,
                                          n_frames=n_frames)
    manifest = {"n_clips": n_clips, "seed": seed, "fps": FPS,
                "frame_size": FRAME_SIZE, "n_frames": n_frames,
                "clips": clips_meta}
    try:
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
    except OSError as exc:
        raise WriteFailure(f"cannot write manifest: {exc}") from exc
    return out_dir


def list_clips(dataset_dir: str | Path) -> list[Path]:
    clips = sorted((Path(dataset_dir) / "clips").glob("clip_*"))
    if not clips:
        raise EmptyDataset(f"no clips under {dataset_dir}")
    return clips


@dataclass
class ToyClip:
    """One loaded clip: frames, audio, mel, and its ground truth."""

    path: Path
    frames: list[np.ndarray]
    wave: Waveform
    mel: MelSpectrogram
    box: np.ndarray
    landmarks: np.ndarray
    mouth_open: np.ndarray
    mouth_heights: np.ndarray


def load_clip(clip_dir: str | Path) -> ToyClip:
    clip_dir = Path(clip_dir)
    stream = media.extract_frames(clip_dir)
    wave = media.load_audio(clip_dir)
    truth = clip_dir / "truth"
    return ToyClip(
        path=clip_dir,
        frames=stream.frames,
        wave=wave,
        mel=melspectrogram(wave),
        box=np.load(truth / "box.npy"),
        landmarks=np.load(truth / "landmarks.npy"),
        mouth_open=np.load(truth / "mouth_open.npy"),
        mouth_heights=np.load(truth / "mouth_heights.npy"),
    )


def _clip_crops(clip: ToyClip, size: int) -> np.ndarray:
    from .faceprep import FaceBox

    box = FaceBox(*[int(v) for v in clip.box])
    return np.stack([crop_face(f, box, size) for f in clip.frames])


def _valid_starts(n_frames: int) -> list[int]:
    return list(range(0, n_frames - SYNC_WINDOW_FRAMES + 1))


class _ClipBank:
    """Shared preloaded crops and mels for the dataset classes."""

    def __init__(self, dataset_dir: str | Path, profile: Profile,
                 clips: list[Path] | None = None):
        self.profile = profile
        paths = clips if clips is not None else list_clips(dataset_dir)
        self.clips = [load_clip(p) for p in paths]
        if not self.clips:
            raise EmptyDataset(f"no clips under {dataset_dir}")
        self.crops = [_clip_crops(c, profile.face_size) for c in self.clips]
        self.index: list[tuple[int, int]] = []
        for ci, clip in enumerate(self.clips):
            for t in _valid_starts(len(clip.frames)):
                self.index.append((ci, t))
        if not self.index:
            raise EmptyDataset("clips too short for a 5-frame window")

    def chunk(self, ci: int, frame: int) -> np.ndarray:
        return mel_window_for_frame(self.clips[ci].mel, frame)


class Stage1Dataset(Dataset):
    """Samples for base-generator training.

    Each item covers a 5-frame target window: one shared reference frame
    drawn from outside the window, the masked and ground-truth crops, one
    mel chunk per frame, and the window-level sync chunk.
    """

    def __init__(self, dataset_dir: str | Path, profile: Profile,
                 reference_policy: str = "random", seed: int = 0,
                 clips: list[Path] | None = None):
        self.bank = _ClipBank(dataset_dir, profile, clips)
        self.reference_policy = reference_policy
        self.seed = seed

    def __len__(self) -> int:
        return len(self.bank.index)

    def __getitem__(self, i: int) -> dict[str, torch.Tensor]:
        ci, t = self.bank.index[i]
        crops = self.bank.crops[ci]
        window = list(range(t, t + SYNC_WINDOW_FRAMES))
        if self.reference_policy == "random":
            rng = np.random.default_rng([self.seed, i])
            candidates = [j for j in range(len(crops)) if j not in window]
            ref_idx = int(candidates[rng.integers(len(candidates))]) \
                if candidates else 0
        else:
            ref_idx = 0
        gt = crops[window]
        masked = np.stack([mask_lower_half(f) for f in gt])
        ref = np.repeat(crops[ref_idx][None], SYNC_WINDOW_FRAMES, axis=0)
        chunks = np.stack([self.bank.chunk(ci, f) for f in window])
        return {
            "ref": torch.from_numpy(ref),
            "masked": torch.from_numpy(masked),
            "gt": torch.from_numpy(gt.copy()),
            "chunks": torch.from_numpy(chunks),
            "sync_chunk": torch.from_numpy(self.bank.chunk(ci, t)),
        }


class SyncPairDataset(Dataset):
    """(chunk, 5-frame lower-half window, label) pairs for the sync expert.

    Even indices are matched pairs; odd indices pull the chunk from a frame
    at least 10 frames away inside the same clip.
    """

    MIN_SHIFT = 10

    def __init__(self, dataset_dir: str | Path, profile: Profile,
                 seed: int = 0, clips: list[Path] | None = None):
        self.bank = _ClipBank(dataset_dir, profile, clips)
        self.seed = seed

    def __len__(self) -> int:
        return len(self.bank.index)

    def __getitem__(self, i: int) -> dict[str, torch.Tensor]:
        ci, t = self.bank.index[i]
        crops = self.bank.crops[ci]
        label = 1.0 if i % 2 == 0 else 0.0
        chunk_frame = t
        if label == 0.0:
            rng = np.random.default_rng([self.seed, i])
            starts = _valid_starts(len(crops))
            far = [s for s in starts if abs(s - t) >= self.MIN_SHIFT]
            chunk_frame = int(far[rng.integers(len(far))]) if far else \
                (t + self.MIN_SHIFT) % len(starts)
        half = self.bank.profile.face_size // 2
        window = crops[t:t + SYNC_WINDOW_FRAMES, :, half:, :]
        window = window.reshape(-1, *window.shape[2:])
        return {
            "chunk": torch.from_numpy(self.bank.chunk(ci, chunk_frame)),
            "window": torch.from_numpy(window.copy()),
            "label": torch.tensor(label),
        }


class Stage2PairDataset(Dataset):
    """Samples from a built stage-2 dataset directory."""

    def __init__(self, stage2_dir: str | Path):
        self.dirs = sorted(Path(stage2_dir).glob("samples/sample_*"))
        if not self.dirs:
            raise EmptyDataset(f"no stage-2 samples under {stage2_dir}")

    def __len__(self) -> int:
        return len(self.dirs)

    def __getitem__(self, i: int) -> dict[str, torch.Tensor]:
        d = self.dirs[i]
        base = media._read_png(d / "base.png").astype(np.float32) / 255.0
        gt = media._read_png(d / "gt.png").astype(np.float32) / 255.0
        sketch = media._read_png(d / "sketch.png")[..., 0].astype(np.float32)
        sketch = (sketch > 127).astype(np.float32)
        lip_box = np.load(d / "lip_box.npy")
        lip_mask = media._read_png(d / "lip_mask.png")[..., 0] > 127
        return {
            "base": torch.from_numpy(base.transpose(2, 0, 1).copy()),
            "sketch": torch.from_numpy(sketch[None].copy()),
            "gt": torch.from_numpy(gt.transpose(2, 0, 1).copy()),
            "lip_box": torch.from_numpy(lip_box.astype(np.int64)),
            "lip_mask": torch.from_numpy(lip_mask.astype(np.float32)),
        }


def mel_chunks_for_frames(mel: MelSpectrogram, n_frames: int) -> np.ndarray:
    """Conditioning chunks for frames 0..n_frames-1, shape (n, 16, 80)."""
    return np.stack([mel_window_for_frame(mel, i) for i in range(n_frames)])


__all__ = [
    "FRAME_SIZE", "SAMPLES_PER_FRAME", "make_toy_dataset", "synth_toy_clip",
    "synth_envelope", "list_clips", "load_clip", "ToyClip", "Stage1Dataset",
    "SyncPairDataset", "Stage2PairDataset", "mel_chunks_for_frames",
    "mel_step_for_frame", "MEL_CHUNK_STEPS",
]
