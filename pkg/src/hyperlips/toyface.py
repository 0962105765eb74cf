"""Analytic toy face: renderer, landmark schema, and deterministic detector.

The face is an ellipse of skin-colored pixels on a dark background with two
eyes, brows, a nose line, and an elliptical mouth whose opening is the single
animated degree of freedom. Because every part is placed by closed-form
geometry, ground-truth boxes, landmarks, and mouth heights are known exactly,
which is what makes the end-to-end pipeline testable without real footage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import faceprep
from .faceprep import FaceBox, LandmarkSchema, LandmarkSet

SCHEMA_ID = "toyface-v1"

# Colors, RGB in [0, 1].
BG_COLOR = (0.16, 0.19, 0.24)
SKIN_COLOR = (0.86, 0.72, 0.63)
EYE_COLOR = (0.10, 0.10, 0.12)
BROW_COLOR = (0.24, 0.16, 0.12)
NOSE_COLOR = (0.59, 0.43, 0.37)
LIP_COLOR = (0.59, 0.24, 0.27)
MOUTH_COLOR = (0.08, 0.03, 0.05)

# Feature placement as fractions of the face half-extents (rx, ry).
EYE_DX, EYE_DY = 0.42, -0.30
EYE_RX, EYE_RY = 0.16, 0.10
BROW_DY = -0.48
BROW_DX = 0.18
MOUTH_DY = 0.60
MOUTH_RX = 0.30
MOUTH_OUTER_RX = 0.38
MOUTH_MIN_RY = 0.04
MOUTH_GAIN_RY = 0.28
LIP_THICKNESS = 0.10

_G = {}
_o = 0
for _name, _n in (("jaw", 9), ("right_brow", 3), ("left_brow", 3),
                  ("right_eye", 4), ("left_eye", 4), ("nose", 3),
                  ("outer_lip", 8), ("inner_lip", 6)):
    _G[_name] = slice(_o, _o + _n)
    _o += _n

SCHEMA = LandmarkSchema(
    schema_id=SCHEMA_ID,
    groups=_G,
    contours=(("jaw", False), ("right_brow", False), ("left_brow", False),
              ("right_eye", True), ("left_eye", True), ("nose", False),
              ("outer_lip", True), ("inner_lip", True)),
    lip_groups=("outer_lip", "inner_lip"),
)


@dataclass(frozen=True)
class ToyFaceParams:
    """Pose of one toy face: ellipse center, half-extents, mouth opening."""

    cx: float
    cy: float
    rx: float
    ry: float
    mouth_open: float  # 0 closed .. 1 fully open

    @property
    def inner_mouth_ry(self) -> float:
        return (MOUTH_MIN_RY + MOUTH_GAIN_RY * self.mouth_open) * self.ry

    @property
    def mouth_cy(self) -> float:
        return self.cy + MOUTH_DY * self.ry

    @property
    def box(self) -> FaceBox:
        return FaceBox(int(round(self.cx - self.rx)), int(round(self.cy - self.ry)),
                       int(round(2 * self.rx)), int(round(2 * self.ry)))


def params_for_box(x: float, y: float, w: float, h: float,
                   mouth_open: float) -> ToyFaceParams:
    """Face ellipse inscribed in the given box."""
    return ToyFaceParams(x + w / 2.0, y + h / 2.0, w / 2.0, h / 2.0, mouth_open)


def mouth_height_px(params: ToyFaceParams) -> float:
    """Inner mouth opening in pixels (full height, not the half-extent)."""
    return 2.0 * params.inner_mouth_ry


def _ellipse_mask(h: int, w: int, cx: float, cy: float, rx: float,
                  ry: float) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    return ((xs - cx) / max(rx, 1e-6)) ** 2 + ((ys - cy) / max(ry, 1e-6)) ** 2 <= 1.0


def _paint(img: np.ndarray, mask: np.ndarray, color: tuple[float, ...]) -> None:
    img[mask] = color


def render_toy_face(h: int, w: int, params: ToyFaceParams,
                    background: np.ndarray | None = None) -> np.ndarray:
    """Draw one face into a fresh (or provided) uint8 HWC RGB canvas."""
    if background is None:
        img = np.empty((h, w, 3), dtype=np.float32)
        img[:] = BG_COLOR
    else:
        img = background.astype(np.float32) / 255.0
    p = params
    _paint(img, _ellipse_mask(h, w, p.cx, p.cy, p.rx, p.ry), SKIN_COLOR)
    for side in (-1, 1):
        ex = p.cx + side * EYE_DX * p.rx
        ey = p.cy + EYE_DY * p.ry
        _paint(img, _ellipse_mask(h, w, ex, ey, EYE_RX * p.rx, EYE_RY * p.ry),
               EYE_COLOR)
    # Lips then the dark interior on top so the opening stays measurable.
    _paint(img, _ellipse_mask(h, w, p.cx, p.mouth_cy, MOUTH_OUTER_RX * p.rx,
                              p.inner_mouth_ry + LIP_THICKNESS * p.ry), LIP_COLOR)
    _paint(img, _ellipse_mask(h, w, p.cx, p.mouth_cy, MOUTH_RX * p.rx,
                              p.inner_mouth_ry), MOUTH_COLOR)
    lm = toy_landmarks(p)
    groups = SCHEMA.groups
    for name, color in (("right_brow", BROW_COLOR), ("left_brow", BROW_COLOR),
                        ("nose", NOSE_COLOR)):
        pts = lm[groups[name]]
        for i in range(len(pts) - 1):
            for x, y in faceprep.bresenham_points(
                    tuple(np.round(pts[i]).astype(int)),
                    tuple(np.round(pts[i + 1]).astype(int))):
                if 0 <= x < w and 0 <= y < h:
                    img[y, x] = color
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def toy_landmarks(p: ToyFaceParams) -> np.ndarray:
    """Closed-form (40, 2) landmark array for a face pose, (x, y) order."""
    pts = np.zeros((SCHEMA.n_points, 2), dtype=np.float32)
    g = SCHEMA.groups

    jaw_deg = np.linspace(170.0, 10.0, 9)
    th = np.deg2rad(jaw_deg)
    pts[g["jaw"], 0] = p.cx + p.rx * np.cos(th)
    pts[g["jaw"], 1] = p.cy + p.ry * np.sin(th)

    for side, brow, eye in ((-1, "right_brow", "right_eye"),
                            (1, "left_brow", "left_eye")):
        ex = p.cx + side * EYE_DX * p.rx
        ey = p.cy + EYE_DY * p.ry
        by = p.cy + BROW_DY * p.ry
        pts[g[brow]] = [(ex - BROW_DX * p.rx, by),
                        (ex, by - 0.04 * p.ry),
                        (ex + BROW_DX * p.rx, by)]
        pts[g[eye]] = [(ex - EYE_RX * p.rx, ey), (ex, ey - EYE_RY * p.ry),
                       (ex + EYE_RX * p.rx, ey), (ex, ey + EYE_RY * p.ry)]

    pts[g["nose"]] = [(p.cx, p.cy - 0.02 * p.ry), (p.cx, p.cy + 0.12 * p.ry),
                      (p.cx, p.cy + 0.20 * p.ry)]

    mcy = p.mouth_cy
    outer_ry = p.inner_mouth_ry + LIP_THICKNESS * p.ry
    th = np.deg2rad(np.arange(8) * 45.0)
    pts[g["outer_lip"], 0] = p.cx + MOUTH_OUTER_RX * p.rx * np.cos(th)
    pts[g["outer_lip"], 1] = mcy + outer_ry * np.sin(th)
    th = np.deg2rad(np.arange(6) * 60.0)
    pts[g["inner_lip"], 0] = p.cx + MOUTH_RX * p.rx * np.cos(th)
    pts[g["inner_lip"], 1] = mcy + p.inner_mouth_ry * np.sin(th)
    return pts


# --- detection -----------------------------------------------------------

MIN_FACE_PIXELS = 16


def _as_float_hwc(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3 and image.shape[0] == 3 and image.shape[2] != 3:
        image = image.transpose(1, 2, 0)
    img = image.astype(np.float32)
    if image.dtype == np.uint8:
        img = img / 255.0
    return img


def skin_mask(image: np.ndarray) -> np.ndarray:
    """Boolean mask of skin-colored pixels; accepts uint8 HWC or float CHW."""
    img = _as_float_hwc(image)
    r, gch, b = img[..., 0], img[..., 1], img[..., 2]
    return (r > 0.55) & (gch > 0.35) & (b > 0.25) & (r > gch) & (gch > b) \
        & ((r - b) > 0.08)


def detect_box(frame: np.ndarray) -> FaceBox | None:
    """Bounding box of the largest skin-colored blob, or None."""
    mask = skin_mask(frame)
    if mask.sum() < MIN_FACE_PIXELS:
        return None
    labels, n = ndimage.label(mask)
    if n > 1:
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, n + 1))
        mask = labels == (1 + int(np.argmax(sizes)))
        if mask.sum() < MIN_FACE_PIXELS:
            return None
    ys, xs = np.nonzero(mask)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return FaceBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def measure_mouth_open_px(face: np.ndarray,
                          params: ToyFaceParams | None = None) -> float:
    """Height in pixels of the dark mouth interior of a face crop.

    Searches the lower-center window where the toy mouth lives and returns the
    vertical extent of near-black pixels there; 0.0 when the mouth is closed
    enough that no interior row is visible. Without explicit params the face
    ellipse is assumed to fill the crop (the shape a box crop produces).
    """
    img = _as_float_hwc(face)
    h, w = img.shape[:2]
    if params is None:
        cy, cx, ry, rx = h / 2.0, w / 2.0, h / 2.0, w / 2.0
    else:
        cy, cx, ry, rx = params.cy, params.cx, params.ry, params.rx
    y0 = int(np.floor(cy + 0.35 * ry))
    y1 = int(np.ceil(min(h, cy + 0.92 * ry)))
    x0 = int(np.floor(cx - 0.45 * rx))
    x1 = int(np.ceil(cx + 0.45 * rx))
    window = img[max(0, y0):y1, max(0, x0):x1]
    if window.size == 0:
        return 0.0
    lum = 0.299 * window[..., 0] + 0.587 * window[..., 1] + 0.114 * window[..., 2]
    # 0.12 sits between the mouth-interior luminance (~0.05) and the
    # background's (~0.19), so off-face corners of the window never count.
    dark_rows = np.nonzero((lum < 0.12).sum(axis=1) > 0)[0]
    if len(dark_rows) == 0:
        return 0.0
    return float(dark_rows[-1] - dark_rows[0] + 1)


def detect_landmarks(face: np.ndarray) -> LandmarkSet | None:
    """Fit the canonical landmark layout to a detected face crop.

    The box gives the ellipse pose; the measured dark-interior height gives
    the mouth opening. A face with no visible interior maps to a closed
    mouth rather than a failure.
    """
    img = _as_float_hwc(face)
    h, w = img.shape[:2]
    if h != w:
        return None
    box = detect_box(img)
    if box is None:
        return None
    p0 = params_for_box(box.x, box.y, box.w, box.h, 0.0)
    opening = measure_mouth_open_px(img, p0)
    denom = 2.0 * MOUTH_GAIN_RY * p0.ry
    mouth = 0.0
    if opening > 0.0:
        mouth = np.clip((opening - 2.0 * MOUTH_MIN_RY * p0.ry) / denom, 0.0, 1.0)
    params = ToyFaceParams(p0.cx, p0.cy, p0.rx, p0.ry, float(mouth))
    return LandmarkSet(toy_landmarks(params), SCHEMA_ID, space=h)


class ToyFaceAdapter:
    """Detector adapter facade registered as "toyface-v1"."""

    schema = SCHEMA

    def detect_box(self, frame: np.ndarray) -> FaceBox | None:
        return detect_box(frame)

    def detect_landmarks(self, face: np.ndarray) -> LandmarkSet | None:
        return detect_landmarks(face)


faceprep.register_schema(SCHEMA)
faceprep.register_detector(SCHEMA_ID, ToyFaceAdapter())
