"""Sync expert training and lip-sync error scoring.

Training is binary cross-entropy on the cosine between audio and video
embeddings over matched and temporally shifted pairs. Scoring follows the
sliding-window convention: for every video window the audio embedding is
searched over frame offsets in [-15, 15]; LSE-D averages the minimum
embedding distance and LSE-C averages the median-minus-minimum confidence
margin.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .audio import MelSpectrogram, mel_window_for_frame
from .checkpoints import save_model
from .config import SYNC_WINDOW_FRAMES, TrainConfig, config_hash, get_profile, \
    save_config
from .data import SyncPairDataset
from .errors import EmptyDataset, NotEnoughFrames, NoSyncModel
from .models import SyncExpert, sync_distance
from .models.sync_expert import stack_window

MAX_OFFSET = 15


def _run_dirs(run_dir: str | Path) -> tuple[Path, Path, Path]:
    run_dir = Path(run_dir)
    ckpts, logs, samples = run_dir / "ckpts", run_dir / "logs", run_dir / "samples"
    for d in (ckpts, logs, samples):
        d.mkdir(parents=True, exist_ok=True)
    return ckpts, logs, samples


def train_sync(config: TrainConfig, dataset_dir: str | Path | None = None) -> Path:
    """Train the audio-visual expert; returns the final checkpoint path."""
    profile = get_profile(config.profile)
    dataset = SyncPairDataset(dataset_dir or config.dataset_dir, profile,
                              seed=config.seed)
    if len(dataset) == 0:
        raise EmptyDataset("sync dataset is empty")
    ckpt_dir, log_dir, _ = _run_dirs(config.run_dir)
    save_config(config, Path(config.run_dir) / "config.ini")
    chash = config_hash(config)

    torch.manual_seed(config.seed)
    model = SyncExpert(profile)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loader = DataLoader(
        dataset, batch_size=config.batch_size, shuffle=True, drop_last=True,
        num_workers=0,
        generator=torch.Generator().manual_seed(config.seed))

    def checkpoint(step: int) -> Path:
        path = ckpt_dir / f"sync_{step:06d}.pt"
        save_model(path, "sync", model, profile.name, step, opt, chash,
                   extra={"modality": "av-sync"})
        latest = ckpt_dir / "sync_latest.pt"
        save_model(latest, "sync", model, profile.name, step, opt, chash,
                   extra={"modality": "av-sync"})
        return latest

    log_path = log_dir / "sync_log.csv"
    step = 0
    with open(log_path, "w", newline="") as fh:
        log = csv.writer(fh)
        log.writerow(["step", "loss", "cos_matched", "cos_mismatched"])
        while step < config.steps:
            for batch in loader:
                if step >= config.steps:
                    break
                step += 1
                f_a = model.embed_audio(batch["chunk"])
                f_v = model.embed_video(batch["window"])
                cos = sync_distance(f_a, f_v).clamp(1e-7, 1.0 - 1e-7)
                loss = torch.nn.functional.binary_cross_entropy(
                    cos, batch["label"])
                opt.zero_grad()
                loss.backward()
                opt.step()
                if step % config.log_every == 0 or step == 1:
                    matched = batch["label"] > 0.5
                    cm = cos[matched].mean().item() if matched.any() else np.nan
                    cmm = cos[~matched].mean().item() if (~matched).any() else np.nan
                    log.writerow([step, f"{loss.item():.6f}",
                                  f"{cm:.4f}", f"{cmm:.4f}"])
                if step % config.checkpoint_every == 0:
                    checkpoint(step)
    return checkpoint(step)


def cosine_gap(expert: SyncExpert, dataset: SyncPairDataset,
               limit: int | None = None) -> tuple[float, float]:
    """Mean cosine on matched and mismatched pairs, for validation."""
    expert.eval()
    matched, mismatched = [], []
    n = len(dataset) if limit is None else min(limit, len(dataset))
    with torch.no_grad():
        for i in range(n):
            item = dataset[i]
            cos = sync_distance(expert.embed_audio(item["chunk"]),
                                expert.embed_video(item["window"])).item()
            (matched if item["label"] > 0.5 else mismatched).append(cos)
    return float(np.mean(matched)), float(np.mean(mismatched))


def lse_from_embeddings(audio_emb: np.ndarray,
                        video_emb: np.ndarray) -> tuple[float, float]:
    """LSE-C and LSE-D from per-window embeddings, offsets in +-15 frames."""
    n = len(video_emb)
    dists_c, dists_d = [], []
    for i in range(n):
        lo = max(0, i - MAX_OFFSET)
        hi = min(n, i + MAX_OFFSET + 1)
        d = np.linalg.norm(audio_emb[lo:hi] - video_emb[i], axis=1)
        dists_d.append(d.min())
        dists_c.append(np.median(d) - d.min())
    return float(np.mean(dists_c)), float(np.mean(dists_d))


def lse_scores(faces: list[np.ndarray], mel: MelSpectrogram,
               expert: SyncExpert | None) -> tuple[float, float]:
    """Score sync between face crops and a mel track.

    faces: per-frame crops (3, S, S) float32 in [0, 1], profile resolution.
    Returns (LSE-C, LSE-D).
    """
    if expert is None:
        raise NoSyncModel("lse_scores needs a trained sync expert")
    if len(faces) < SYNC_WINDOW_FRAMES:
        raise NotEnoughFrames(
            f"need at least {SYNC_WINDOW_FRAMES} frames, got {len(faces)}")
    expert.eval()
    n_windows = len(faces) - SYNC_WINDOW_FRAMES + 1
    windows = torch.stack([
        stack_window([torch.from_numpy(np.ascontiguousarray(f))
                      for f in faces[i:i + SYNC_WINDOW_FRAMES]])
        for i in range(n_windows)])
    chunks = torch.from_numpy(np.stack(
        [mel_window_for_frame(mel, i) for i in range(n_windows)]))
    with torch.no_grad():
        v = expert.embed_video(windows).numpy()
        a = expert.embed_audio(chunks).numpy()
    return lse_from_embeddings(a, v)
