"""Face preparation: boxes, crops, landmarks, sketches, lip regions.

Face crops are float32 CHW RGB in [0, 1]; full frames are uint8 HWC RGB.
Landmark detection goes through a narrow adapter registry so the pipeline can
run against the in-repo deterministic toy detector ("toyface-v1") or any
external tool wired in by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np

from .errors import (
    DegenerateBox,
    EmptySequence,
    LandmarkFailure,
    MissingLipLandmarks,
    NoFace,
)

DEFAULT_DETECTOR = "toyface-v1"


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned face box in source-frame pixel coordinates."""

    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def validate_in(self, frame_h: int, frame_w: int) -> None:
        if self.w <= 0 or self.h <= 0:
            raise DegenerateBox(f"box {self} has non-positive size")
        if self.x < 0 or self.y < 0 or self.x + self.w > frame_w \
                or self.y + self.h > frame_h:
            raise DegenerateBox(f"box {self} outside {frame_w}x{frame_h} frame")


@dataclass(frozen=True)
class LandmarkSchema:
    """Named landmark topology: point groups and the contours to rasterize."""

    schema_id: str
    groups: dict[str, slice]
    contours: tuple[tuple[str, bool], ...]  # (group name, closed?)
    lip_groups: tuple[str, ...]

    @property
    def n_points(self) -> int:
        return max(s.stop for s in self.groups.values())


SCHEMAS: dict[str, LandmarkSchema] = {}


def register_schema(schema: LandmarkSchema) -> None:
    SCHEMAS[schema.schema_id] = schema


def get_schema(schema_id: str) -> LandmarkSchema:
    _ensure_builtin_adapters()
    return SCHEMAS[schema_id]


@dataclass
class LandmarkSet:
    """Ordered 2-D landmarks in crop space, (N, 2) as (x, y)."""

    points: np.ndarray
    schema_id: str
    space: int  # side length of the square crop the coordinates live in

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float32).reshape(-1, 2)
        schema = get_schema(self.schema_id)
        if len(self.points) != schema.n_points:
            raise ValueError(
                f"schema {self.schema_id} expects {schema.n_points} points, "
                f"got {len(self.points)}")

    def group(self, name: str) -> np.ndarray:
        return self.points[get_schema(self.schema_id).groups[name]]


@dataclass
class LipRegion:
    """Lip bounding box plus a filled lip mask over the full crop."""

    box: FaceBox
    mask: np.ndarray  # (S, S) float32 in {0, 1}


# --- detector adapters ---------------------------------------------------

DETECTORS: dict[str, object] = {}


def register_detector(name: str, adapter: object) -> None:
    """Adapter contract: .detect_box(frame) -> FaceBox|None and
    .detect_landmarks(face) -> LandmarkSet|None, both deterministic."""
    DETECTORS[name] = adapter


def _ensure_builtin_adapters() -> None:
    if DEFAULT_DETECTOR not in DETECTORS:
        from . import toyface  # registers itself on import

        assert DEFAULT_DETECTOR in DETECTORS, toyface
def get_detector(name: str = DEFAULT_DETECTOR):
    _ensure_builtin_adapters()
    return DETECTORS[name]


def detect_face(frame: np.ndarray, detector: str = DEFAULT_DETECTOR) -> FaceBox:
    """Best face box in a frame; the larger box wins when several are found."""
    box = get_detector(detector).detect_box(frame)
    if box is None:
        raise NoFace("no face found in frame")
    return box


def detect_landmarks(face: np.ndarray,
                     detector: str = DEFAULT_DETECTOR) -> LandmarkSet:
    lm = get_detector(detector).detect_landmarks(face)
    if lm is None:
        raise LandmarkFailure("landmark detection failed")
    return lm


# --- crop / mask / paste -------------------------------------------------

def crop_face(frame: np.ndarray, box: FaceBox, size: int = 128) -> np.ndarray:
    """Crop a box and resize to (3, size, size) float32 in [0, 1]."""
    h, w = frame.shape[:2]
    box.validate_in(h, w)
    patch = frame[box.y:box.y + box.h, box.x:box.x + box.w]
    if patch.shape[:2] != (size, size):
        patch = cv2.resize(patch, (size, size), interpolation=cv2.INTER_LINEAR)
    out = patch.astype(np.float32)
    if frame.dtype == np.uint8:
        out = out / 255.0
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def mask_lower_half(face: np.ndarray) -> np.ndarray:
    """Zero rows [S/2, S); the upper half is untouched. Idempotent."""
    if face.ndim != 3 or face.shape[1] != face.shape[2]:
        raise ValueError(f"expected square CHW face, got {face.shape}")
    out = face.copy()
    out[:, face.shape[1] // 2:, :] = 0.0
    return out


def paste_back(full_frame: np.ndarray, face: np.ndarray,
               box: FaceBox) -> np.ndarray:
    """Composite a generated face into a frame; pixels outside the box are
    untouched."""
    h, w = full_frame.shape[:2]
    box.validate_in(h, w)
    hwc = np.clip(face.transpose(1, 2, 0), 0.0, 1.0)
    patch = cv2.resize(hwc, (box.w, box.h), interpolation=cv2.INTER_LINEAR)
    out = full_frame.copy()
    if full_frame.dtype == np.uint8:
        patch = np.clip(np.round(patch * 255.0), 0, 255).astype(np.uint8)
    out[box.y:box.y + box.h, box.x:box.x + box.w] = patch
    return out


@dataclass
class FaceTriple:
    """Training triple: reference, lower-half-masked target, ground truth."""

    reference: np.ndarray
    masked: np.ndarray
    ground_truth: np.ndarray

    def validate(self) -> None:
        s = self.ground_truth.shape[1]
        half = s // 2
        assert np.array_equal(self.masked[:, :half], self.ground_truth[:, :half])
        assert not self.masked[:, half:].any()
        for img in (self.reference, self.masked, self.ground_truth):
            assert img.min() >= 0.0 and img.max() <= 1.0


def make_face_triple(reference: np.ndarray, ground_truth: np.ndarray) -> FaceTriple:
    return FaceTriple(reference, mask_lower_half(ground_truth), ground_truth)


# --- reference selection -------------------------------------------------

def select_reference_index(frames: Sequence[np.ndarray], policy: str,
                           rng_seed: int | None = None,
                           exclude_index: int | None = None,
                           fixed_index: int | None = None,
                           detector: str = DEFAULT_DETECTOR) -> int:
    """Pick the reference frame index.

    policy="random": seeded uniform draw, excluding the target frame.
    policy="fixed": the configured frame, defaulting to the frame with the
    smallest lip-box height (closed-mouth heuristic).
    """
    if len(frames) == 0:
        raise EmptySequence("no frames to select a reference from")
    if policy == "random":
        candidates = [i for i in range(len(frames)) if i != exclude_index]
        if not candidates:
            return 0
        rng = np.random.default_rng(rng_seed)
        return int(candidates[rng.integers(len(candidates))])
    if policy == "fixed":
        if fixed_index is not None:
            if not 0 <= fixed_index < len(frames):
                raise IndexError(f"fixed reference index {fixed_index} out of range")
            return fixed_index
        best, best_h = 0, np.inf
        for i, face in enumerate(frames):
            try:
                region = lip_region(detect_landmarks(face, detector))
            except (LandmarkFailure, MissingLipLandmarks):
                continue
            if region.box.h < best_h:
                best, best_h = i, region.box.h
        return best
    raise ValueError(f"unknown reference policy {policy!r}")


def select_reference(frames: Sequence[np.ndarray], policy: str,
                     rng_seed: int | None = None, **kw) -> np.ndarray:
    return frames[select_reference_index(frames, policy, rng_seed, **kw)]


# --- sketch rendering ----------------------------------------------------

def bresenham_points(p0: tuple[int, int], p1: tuple[int, int]) -> list[tuple[int, int]]:
    """Integer line raster between two points, endpoints included."""
    x0, y0 = int(p0[0]), int(p0[1])
    x1, y1 = int(p1[0]), int(p1[1])
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    pts = []
    while True:
        pts.append((x0, y0))
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    return pts


def _draw_polyline(raster: np.ndarray, pts: np.ndarray, closed: bool) -> None:
    size = raster.shape[0]
    n = len(pts)
    segs = n if closed else n - 1
    for i in range(segs):
        p0 = np.round(pts[i]).astype(int)
        p1 = np.round(pts[(i + 1) % n]).astype(int)
        for x, y in bresenham_points(tuple(p0), tuple(p1)):
            if 0 <= x < size and 0 <= y < size:
                raster[y, x] = 1.0


def render_sketch(lm: LandmarkSet | None, size: int) -> np.ndarray:
    """Rasterize schema contours as 1-px binary polylines, (1, size, size)."""
    raster = np.zeros((size, size), dtype=np.float32)
    if lm is None:
        return raster[None]
    schema = get_schema(lm.schema_id)
    scale = size / float(lm.space)
    for name, closed in schema.contours:
        pts = lm.group(name) * scale
        if len(pts) >= 2:
            _draw_polyline(raster, pts, closed)
    return raster[None]


# --- lip region ----------------------------------------------------------

def lip_region(lm: LandmarkSet, dilate: float = 0.05) -> LipRegion:
    """Tight lip bounding box (dilated) and the filled outer-lip polygon."""
    schema = get_schema(lm.schema_id)
    if not schema.lip_groups:
        raise MissingLipLandmarks(f"schema {lm.schema_id} has no lip groups")
    pts = np.concatenate([lm.group(g) for g in schema.lip_groups])
    if not np.all(np.isfinite(pts)):
        raise MissingLipLandmarks("lip landmarks contain non-finite points")
    s = lm.space
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    pad_x = dilate * (x1 - x0)
    pad_y = dilate * (y1 - y0)
    ix0 = max(0, int(np.floor(x0 - pad_x)))
    iy0 = max(0, int(np.floor(y0 - pad_y)))
    ix1 = min(s, int(np.ceil(x1 + pad_x)) + 1)
    iy1 = min(s, int(np.ceil(y1 + pad_y)) + 1)
    if ix1 <= ix0 or iy1 <= iy0:
        raise MissingLipLandmarks("degenerate lip bounding box")
    box = FaceBox(ix0, iy0, ix1 - ix0, iy1 - iy0)
    mask8 = np.zeros((s, s), dtype=np.uint8)
    outer = np.round(lm.group(schema.lip_groups[0])).astype(np.int32)
    cv2.fillPoly(mask8, [outer.reshape(-1, 1, 2)], 1)
    return LipRegion(box, mask8.astype(np.float32))
