"""End-to-end dubbing: source video + driving audio -> dubbed video.

Per frame: detect and crop the face, generate the stage-1 face from the
frame's mel window, optionally refine through the HR decoder guided by a
sketch detected on the base face, blend the result with the original crop
through a soft face mask, and paste it back into the frame. A sidecar
``<out>.meta.json`` records every per-frame fallback so silent degradation
is visible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from . import media
from .audio import Waveform, melspectrogram, mel_window_for_frame
from .checkpoints import load_base_generator, load_hr_decoder
from .config import FPS, SAMPLE_RATE, get_profile
from .errors import LandmarkFailure, MissingLipLandmarks, NoFace, \
    NoFaceInVideo, ShapeMismatch, WriteFailure
from .faceprep import FaceBox, LandmarkSet, crop_face, detect_face, \
    detect_landmarks, get_schema, paste_back, render_sketch, \
    select_reference_index
from .training import generate_base_faces


def face_mask_alpha(face: np.ndarray, lm: LandmarkSet | None) -> np.ndarray:
    """Soft fusion mask: face hull minus brows, eyes, and nose, feathered.

    Returns (S, S) float32 in [0, 1] at the landmark space resolution.
    """
    if lm is None:
        raise LandmarkFailure("fusion mask needs landmarks")
    s = lm.space
    schema = get_schema(lm.schema_id)
    mask = np.zeros((s, s), dtype=np.float32)
    hull = cv2.convexHull(np.round(lm.points).astype(np.int32))
    cv2.fillConvexPoly(mask, hull, 1.0)
    for name in ("right_eye", "left_eye"):
        if name in schema.groups:
            pts = np.round(lm.group(name)).astype(np.int32)
            cv2.fillPoly(mask, [pts.reshape(-1, 1, 2)], 0.0)
    for name in ("right_brow", "left_brow", "nose"):
        if name in schema.groups:
            pts = np.round(lm.group(name)).astype(np.int32)
            cv2.polylines(mask, [pts.reshape(-1, 1, 2)], False, 0.0,
                          thickness=2)
    sigma = s / 64.0
    ksize = int(2 * round(3 * sigma) + 1)
    mask = cv2.GaussianBlur(mask, (ksize, ksize), sigma)
    return np.clip(mask, 0.0, 1.0)


def fuse(predicted: np.ndarray, reference: np.ndarray,
         alpha: np.ndarray) -> np.ndarray:
    """Pixelwise convex blend of predicted and reference faces."""
    if predicted.shape != reference.shape:
        raise ShapeMismatch(
            f"predicted {predicted.shape} vs reference {reference.shape}")
    if alpha.shape != predicted.shape[-2:]:
        raise ShapeMismatch(
            f"alpha {alpha.shape} vs face {predicted.shape[-2:]}")
    a = alpha[None] if predicted.ndim == 3 else alpha
    return predicted * a + reference * (1.0 - a)


@dataclass
class DubOptions:
    ref_frame: int | None = None
    no_fusion: bool = False
    detector: str = "toyface-v1"
    force: bool = False
    batch: int = 64


@dataclass
class _FrameMeta:
    boxes_carried: list[int] = field(default_factory=list)
    hr_fallbacks: list[int] = field(default_factory=list)
    fusion_skipped: list[int] = field(default_factory=list)


def _detect_boxes(frames: list[np.ndarray], detector: str,
                  meta: _FrameMeta) -> list[FaceBox]:
    """Per-frame boxes with carry-forward on failure and median smoothing."""
    raw: list[FaceBox | None] = []
    for frame in frames:
        try:
            raw.append(detect_face(frame, detector))
        except NoFace:
            raw.append(None)
    if all(b is None for b in raw):
        raise NoFaceInVideo("no face detected in any frame")
    first = next(b for b in raw if b is not None)
    boxes = []
    prev = first
    for i, b in enumerate(raw):
        if b is None:
            meta.boxes_carried.append(i)
            b = prev
        boxes.append(b)
        prev = b
    arr = np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=np.float64)
    smooth = np.empty_like(arr)
    n = len(arr)
    for i in range(n):
        lo, hi = max(0, i - 2), min(n, i + 3)
        smooth[i] = np.median(arr[lo:hi], axis=0)
    return [FaceBox(*[int(round(v)) for v in row]) for row in smooth]


def dub(video: str | Path, audio: str | Path, base_ckpt: str | Path,
        out: str | Path, hr_ckpt: str | Path | None = None,
        options: DubOptions | None = None) -> Path:
    opt = options or DubOptions()
    out = Path(out)
    if out.exists() and not opt.force:
        raise WriteFailure(f"output {out} exists; pass force to overwrite")

    gen, base_meta = load_base_generator(base_ckpt)
    profile = get_profile(base_meta.profile)
    s = profile.face_size
    hr_model = None
    scale = 1
    if hr_ckpt is not None:
        hr_model, _ = load_hr_decoder(hr_ckpt)
        scale = hr_model.variant.scale

    stream = media.extract_frames(video)
    wave = media.load_audio(audio)
    n_out = min(len(stream.frames),
                media.frame_count_for_duration(wave.duration))
    frames = stream.frames[:n_out]
    wave = Waveform(wave.samples[:n_out * (SAMPLE_RATE // FPS)])
    mel = melspectrogram(wave)

    meta = _FrameMeta()
    boxes = _detect_boxes(frames, opt.detector, meta)
    crops = np.stack([crop_face(f, b, s) for f, b in zip(frames, boxes)])
    chunks = np.stack([mel_window_for_frame(mel, i) for i in range(n_out)])
    if opt.ref_frame is not None:
        ref_idx = int(opt.ref_frame)
        if not 0 <= ref_idx < n_out:
            raise IndexError(f"reference frame {ref_idx} out of range")
    else:
        ref_idx = select_reference_index(list(crops), "fixed",
                                         detector=opt.detector)
    base_faces = generate_base_faces(gen, crops, chunks, ref_idx,
                                     batch=opt.batch)

    out_frames = []
    for i in range(n_out):
        face = base_faces[i]
        lm = None
        try:
            lm = detect_landmarks(face, opt.detector)
        except LandmarkFailure:
            lm = None
        if hr_model is not None:
            if lm is None:
                meta.hr_fallbacks.append(i)
            else:
                sketch = render_sketch(lm, s)
                with torch.no_grad():
                    face = hr_model(torch.from_numpy(face),
                                    torch.from_numpy(sketch)).numpy()
        size = s * scale if (hr_model is not None and lm is not None) else s
        if not opt.no_fusion:
            if lm is None:
                meta.fusion_skipped.append(i)
            else:
                lm_scaled = lm if size == lm.space else LandmarkSet(
                    lm.points * (size / lm.space), lm.schema_id, size)
                try:
                    alpha = face_mask_alpha(face, lm_scaled)
                    original = crop_face(frames[i], boxes[i], size)
                    face = fuse(face, original, alpha)
                except (LandmarkFailure, MissingLipLandmarks):
                    meta.fusion_skipped.append(i)
        out_frames.append(paste_back(frames[i], face, boxes[i]))

    result = media.write_video(out_frames, wave, out)
    sidecar = out.parent / (out.name + ".meta.json")
    sidecar.write_text(json.dumps({
        "frames": n_out,
        "reference_frame": ref_idx,
        "hr": hr_model is not None,
        "hr_scale": scale,
        "fusion": not opt.no_fusion,
        "boxes_carried": meta.boxes_carried,
        "hr_fallbacks": meta.hr_fallbacks,
        "fusion_skipped": meta.fusion_skipped,
    }, sort_keys=True, indent=1))
    return result
