"""Clip I/O: frame streams, audio ingestion, and muxing.

Two storage forms are supported:

  - frame-directory clips: ``<dir>/frames/%06d.png`` + ``<dir>/audio.wav`` +
    ``<dir>/clip.json``. Lossless and tool-free; the toy pipeline uses these.
  - regular containers (mp4/mkv/avi/...), delegated to an external media tool
    (ffmpeg CLI syntax) over a subprocess: PNG frames via image2, PCM WAV over
    a pipe. ``HLIPS_MEDIA_TOOL`` overrides the tool binary.

Frames are uint8 RGB (H, W, 3); video is 25 fps everywhere after ingestion.
"""
from __future__ import annotations

import json
import os
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .audio import Waveform, read_wav, write_wav
from .config import FPS
from .errors import (
    DurationMismatch,
    NoAudioTrack,
    UnreadableMedia,
    WriteFailure,
)

VIDEO_EXTENSIONS = {".mp4", ".mkv", ".avi", ".mov", ".webm"}


@dataclass
class FrameStream:
    """Ordered RGB frames at a fixed 25 fps."""

    frames: list[np.ndarray] = field(default_factory=list)
    fps: int = FPS

    @property
    def timestamps(self) -> list[float]:
        return [i / self.fps for i in range(len(self.frames))]

    @property
    def duration(self) -> float:
        return len(self.frames) / self.fps

    def __len__(self) -> int:
        return len(self.frames)


def frame_count_for_duration(seconds: float) -> int:
    return int(round(seconds * FPS))


def media_tool_command() -> list[str] | None:
    """Resolve the external media tool, or None when unavailable."""
    override = os.environ.get("HLIPS_MEDIA_TOOL")
    if override:
        return shlex.split(override)
    exe = shutil.which("ffmpeg")
    return [exe] if exe else None


def _require_tool() -> list[str]:
    tool = media_tool_command()
    if tool is None:
        raise UnreadableMedia(
            "no media tool available: install ffmpeg or set HLIPS_MEDIA_TOOL")
    return tool


def is_framedir(path: str | Path) -> bool:
    p = Path(path)
    return p.is_dir() and ((p / "frames").is_dir() or (p / "clip.json").is_file())


def _read_png(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise UnreadableMedia(f"cannot decode frame {path}")
    return img[:, :, ::-1].copy()  # BGR -> RGB


def _write_png(path: Path, frame: np.ndarray) -> None:
    ok = cv2.imwrite(str(path), np.ascontiguousarray(frame[:, :, ::-1]))
    if not ok:
        raise WriteFailure(f"cannot write frame {path}")


def _resample_to_25fps(frames: list[np.ndarray], src_fps: float) -> list[np.ndarray]:
    if src_fps == FPS:
        return frames
    n_out = int(round(len(frames) / src_fps * FPS))
    out = []
    for i in range(n_out):
        src = min(int(i * src_fps / FPS + 1e-9), len(frames) - 1)
        out.append(frames[src])
    return out


# --- ingestion -----------------------------------------------------------

def load_audio(path: str | Path) -> Waveform:
    """Decode the audio track of a clip as mono 16 kHz."""
    p = Path(path)
    if not p.exists():
        raise UnreadableMedia(f"no such file: {p}")
    if is_framedir(p):
        wav = p / "audio.wav"
        if not wav.is_file():
            raise NoAudioTrack(f"frame-directory clip {p} has no audio.wav")
        return read_wav(wav)
    if p.suffix.lower() == ".wav":
        return read_wav(p)
    tool = _require_tool()
    cmd = tool + ["-v", "error", "-i", str(p), "-vn", "-ac", "1",
                  "-ar", "16000", "-f", "wav", "-"]
    res = subprocess.run(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    if res.returncode != 0 or not res.stdout:
        err = res.stderr.decode(errors="replace")
        if "not contain any stream" in err or "no audio" in err.lower():
            raise NoAudioTrack(f"{p} has no audio track")
        raise UnreadableMedia(f"media tool failed on {p}: {err.strip()}")
    return read_wav(res.stdout)


def extract_frames(path: str | Path) -> FrameStream:
    """Decode a clip into RGB frames resampled to 25 fps."""
    p = Path(path)
    if not p.exists():
        raise UnreadableMedia(f"no such file: {p}")
    if is_framedir(p):
        meta_path = p / "clip.json"
        src_fps = float(FPS)
        if meta_path.is_file():
            src_fps = float(json.loads(meta_path.read_text()).get("fps", FPS))
        frame_files = sorted((p / "frames").glob("*.png"))
        if not frame_files:
            raise UnreadableMedia(f"frame-directory clip {p} has no frames")
        frames = [_read_png(f) for f in frame_files]
        return FrameStream(_resample_to_25fps(frames, src_fps))
    tool = _require_tool()
    with tempfile.TemporaryDirectory() as td:
        out_pattern = str(Path(td) / "%06d.png")
        cmd = tool + ["-v", "error", "-i", str(p), "-vf", f"fps={FPS}",
                      "-f", "image2", out_pattern]
        res = subprocess.run(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
        frame_files = sorted(Path(td).glob("*.png"))
        if res.returncode != 0 or not frame_files:
            err = res.stderr.decode(errors="replace")
            raise UnreadableMedia(f"media tool failed on {p}: {err.strip()}")
        frames = [_read_png(f) for f in frame_files]
    return FrameStream(frames)


# --- output --------------------------------------------------------------

def _check_duration(n_frames: int, audio: Waveform) -> None:
    expected = frame_count_for_duration(audio.duration)
    if abs(n_frames - expected) > 1:
        raise DurationMismatch(
            f"{n_frames} frames vs {audio.duration:.2f} s audio "
            f"({expected} frames at {FPS} fps)")


def write_video(frames: FrameStream | list[np.ndarray], audio: Waveform,
                path: str | Path) -> Path:
    """Mux 25 fps frames with 16 kHz audio.

    Paths with a known video extension go through the media tool; anything
    else is written as a frame-directory clip.
    """
    frame_list = frames.frames if isinstance(frames, FrameStream) else list(frames)
    if not frame_list:
        raise WriteFailure("no frames to write")
    _check_duration(len(frame_list), audio)
    p = Path(path)
    if p.suffix.lower() not in VIDEO_EXTENSIONS:
        return _write_framedir(frame_list, audio, p)

    tool = _require_tool()
    with tempfile.TemporaryDirectory() as td:
        tdir = Path(td)
        for i, frame in enumerate(frame_list):
            _write_png(tdir / f"{i:06d}.png", frame)
        wav_path = tdir / "audio.wav"
        write_wav(audio, wav_path)
        if p.suffix.lower() == ".mp4":
            codec = ["-c:v", "libx264", "-pix_fmt", "yuv420p", "-c:a", "aac"]
        else:
            codec = ["-c:v", "png", "-c:a", "pcm_s16le"]
        cmd = tool + ["-v", "error", "-y",
                      "-framerate", str(FPS), "-i", str(tdir / "%06d.png"),
                      "-i", str(wav_path), *codec, "-r", str(FPS),
                      "-shortest", str(p)]
        res = subprocess.run(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
        if res.returncode != 0 or not p.exists():
            err = res.stderr.decode(errors="replace")
            raise WriteFailure(f"media tool failed writing {p}: {err.strip()}")
    return p


def _write_framedir(frame_list: list[np.ndarray], audio: Waveform,
                    p: Path) -> Path:
    try:
        (p / "frames").mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frame_list):
            _write_png(p / "frames" / f"{i:06d}.png", frame)
        write_wav(audio, p / "audio.wav")
        meta = {"fps": FPS, "n_frames": len(frame_list),
                "sample_rate": audio.sample_rate}
        (p / "clip.json").write_text(json.dumps(meta, sort_keys=True))
    except OSError as exc:
        raise WriteFailure(f"cannot write frame-directory clip {p}: {exc}") from exc
    return p
