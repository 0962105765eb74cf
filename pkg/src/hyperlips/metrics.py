"""Paired-video evaluation: PSNR, SSIM, LMD, and sync scores.

The protocol mirrors common talking-face evaluation: faces are detected
independently on the generated and ground-truth videos, cropped, resized to
160x160, and the pixel metrics run on those crops. LMD is reported in raw
pixels at the 160x160 crop size; the report records that convention.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from . import media
from .audio import melspectrogram
from .checkpoints import load_sync_expert
from .config import get_profile
from .errors import LandmarkFailure, NoFace, NoValidFrames, ShapeMismatch
from .faceprep import crop_face, detect_face, detect_landmarks, get_schema
from .sync import lse_scores

PSNR_CAP = 100.0
EVAL_CROP = 160


def psnr(x: np.ndarray, y: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1], capped at 100."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"psnr shapes {x.shape} vs {y.shape}")
    mse = np.mean((x - y) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP))


def _gaussian_kernel(radius: int = 5, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_2d(x: np.ndarray, y: np.ndarray, k1: float = 0.01,
             k2: float = 0.03) -> float:
    """SSIM over the valid region with an 11x11 Gaussian window.

    Windowed statistics use the population (not sample-corrected)
    covariance; data range is fixed at 1.0.
    """
    kern = _gaussian_kernel()
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    mu_x = convolve2d(x, kern, mode="valid")
    mu_y = convolve2d(y, kern, mode="valid")
    xx = convolve2d(x * x, kern, mode="valid") - mu_x ** 2
    yy = convolve2d(y * y, kern, mode="valid") - mu_y ** 2
    xy = convolve2d(x * y, kern, mode="valid") - mu_x * mu_y
    c1, c2 = k1 ** 2, k2 ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean structural similarity; color images average per-channel SSIM."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"ssim shapes {x.shape} vs {y.shape}")
    if x.ndim == 2:
        return _ssim_2d(x, y)
    if x.ndim == 3:
        axis = 0 if x.shape[0] in (1, 3) else 2
        chans = range(x.shape[axis])
        if axis == 0:
            return float(np.mean([_ssim_2d(x[c], y[c]) for c in chans]))
        return float(np.mean([_ssim_2d(x[..., c], y[..., c]) for c in chans]))
    raise ShapeMismatch(f"ssim expects 2-D or 3-D arrays, got {x.ndim}-D")


def lip_distance(points_a: np.ndarray, points_b: np.ndarray,
                 schema_id: str) -> float:
    """Mean L2 distance over the schema's lip landmarks."""
    schema = get_schema(schema_id)
    idx = np.concatenate([np.arange(s.start, s.stop)
                          for name, s in schema.groups.items()
                          if name in schema.lip_groups])
    d = np.linalg.norm(points_a[idx] - points_b[idx], axis=1)
    return float(d.mean())


def _eval_crop(frame: np.ndarray, detector: str) -> np.ndarray | None:
    try:
        box = detect_face(frame, detector)
    except NoFace:
        return None
    return crop_face(frame, box, EVAL_CROP)


def lmd(gen_frames: list[np.ndarray], gt_frames: list[np.ndarray],
        detector: str = "toyface-v1") -> tuple[float, int, int]:
    """Mean lip-landmark distance across frames on 160x160 crops.

    Returns (value, frames_used, frames_skipped). Frames where detection
    fails on either side are skipped and counted.
    """
    if len(gen_frames) != len(gt_frames):
        raise ShapeMismatch(
            f"{len(gen_frames)} generated vs {len(gt_frames)} gt frames")
    values = []
    skipped = 0
    for fg, ft in zip(gen_frames, gt_frames):
        pair = []
        for frame in (fg, ft):
            crop = _eval_crop(frame, detector)
            if crop is None:
                break
            try:
                pair.append(detect_landmarks(crop, detector))
            except LandmarkFailure:
                break
        if len(pair) != 2:
            skipped += 1
            continue
        values.append(lip_distance(pair[0].points, pair[1].points,
                                   pair[0].schema_id))
    if not values:
        raise NoValidFrames("landmark detection failed on every frame pair")
    return float(np.mean(values)), len(values), skipped


def evaluate(gen_video: str | Path, gt_video: str | Path,
             audio: str | Path, sync_ckpt: str | Path,
             out: str | Path | None = None,
             detector: str = "toyface-v1") -> dict:
    """Full paired evaluation; returns (and optionally writes) the report."""
    gen_frames = media.extract_frames(gen_video).frames
    gt_frames = media.extract_frames(gt_video).frames
    n = min(len(gen_frames), len(gt_frames))
    gen_frames, gt_frames = gen_frames[:n], gt_frames[:n]

    psnr_vals, ssim_vals, lmd_vals = [], [], []
    skipped = 0
    for fg, ft in zip(gen_frames, gt_frames):
        cg = _eval_crop(fg, detector)
        ct = _eval_crop(ft, detector)
        if cg is None or ct is None:
            skipped += 1
            continue
        try:
            lg = detect_landmarks(cg, detector)
            lt = detect_landmarks(ct, detector)
        except LandmarkFailure:
            skipped += 1
            continue
        psnr_vals.append(psnr(cg, ct))
        ssim_vals.append(ssim(cg, ct))
        lmd_vals.append(lip_distance(lg.points, lt.points, lg.schema_id))
    if not psnr_vals:
        raise NoValidFrames("no frame pair passed detection on both videos")

    expert, meta = load_sync_expert(sync_ckpt)
    s = get_profile(meta.profile).face_size
    wave = media.load_audio(audio)
    mel = melspectrogram(wave)
    sync_crops = []
    for fg in gen_frames:
        try:
            box = detect_face(fg, detector)
        except NoFace:
            continue
        sync_crops.append(crop_face(fg, box, s))
    lse_c, lse_d = lse_scores(sync_crops, mel, expert)

    report = {
        "psnr": float(np.mean(psnr_vals)),
        "ssim": float(np.mean(ssim_vals)),
        "lmd": float(np.mean(lmd_vals)),
        "lse_c": lse_c,
        "lse_d": lse_d,
        "frames_used": len(psnr_vals),
        "frames_skipped": skipped,
        "lmd_space": f"pixels@{EVAL_CROP}",
    }
    if out is not None:
        Path(out).write_text(json.dumps(report, sort_keys=True, indent=1))
    return report
