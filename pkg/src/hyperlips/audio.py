"""Waveforms and mel-spectrogram windows.

Conventions (fixed across the whole pipeline):
  - audio is mono float32 at 16 kHz, amplitudes in [-1, 1]
  - mel matrices are (80 bins, T steps); hop 200 / window 800 gives 80 steps/s
  - one conditioning chunk is 16 consecutive steps, returned as (16, 80)
  - the chunk for video frame i starts at mel step round(3.2 * i)
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from math import ceil, gcd
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .config import (
    MEL_AMP_FLOOR,
    MEL_CHUNK_STEPS,
    MEL_FMAX,
    MEL_FMIN,
    MEL_HOP,
    MEL_STEPS_PER_FRAME,
    MEL_WINDOW,
    N_MELS,
    SAMPLE_RATE,
)
from .errors import IndexOutOfRange, TooShort, UnreadableMedia


@dataclass
class Waveform:
    """Mono 16 kHz waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError("Waveform.samples must be 1-D")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def normalize_waveform(samples: np.ndarray, sr: int) -> Waveform:
    """Downmix to mono, resample to 16 kHz, clip to [-1, 1]."""
    y = np.asarray(samples)
    if y.ndim == 2:  # (n, channels)
        y = y.mean(axis=1)
    if np.issubdtype(y.dtype, np.integer):
        y = y.astype(np.float64) / float(np.iinfo(y.dtype).max)
    else:
        y = y.astype(np.float64)
    if sr != SAMPLE_RATE:
        g = gcd(SAMPLE_RATE, sr)
        y = resample_poly(y, SAMPLE_RATE // g, sr // g)
    y = np.clip(y, -1.0, 1.0)
    return Waveform(y.astype(np.float32), SAMPLE_RATE)


def read_wav(source: str | Path | bytes) -> Waveform:
    """Read a WAV file (path or raw bytes) into a normalized Waveform."""
    try:
        if isinstance(source, bytes):
            sr, data = wavfile.read(io.BytesIO(source))
        else:
            sr, data = wavfile.read(str(source))
    except Exception as exc:
        raise UnreadableMedia(f"cannot read WAV from {source!r}: {exc}") from exc
    return normalize_waveform(data, sr)


def write_wav(w: Waveform, path: str | Path) -> None:
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), w.sample_rate, pcm)


# --- mel spectrogram -----------------------------------------------------

def _hz_to_mel(f: np.ndarray | float) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m: np.ndarray | float) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = MEL_WINDOW,
                   sr: int = SAMPLE_RATE, fmin: float = MEL_FMIN,
                   fmax: float = MEL_FMAX) -> np.ndarray:
    """Triangular mel filterbank, (n_mels, n_fft//2 + 1)."""
    n_bins = n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, sr / 2.0, n_bins)
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, ctr, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (fft_freqs - lo) / (ctr - lo)
        down = (hi - fft_freqs) / (hi - ctr)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


_FILTERBANK = mel_filterbank()


@dataclass
class MelSpectrogram:
    """Normalized log-mel matrix, shape (80 bins, T steps)."""

    data: np.ndarray
    hop: int = MEL_HOP
    window: int = MEL_WINDOW
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] != N_MELS:
            raise ValueError(f"mel matrix must be ({N_MELS}, T), got {self.data.shape}")

    @property
    def steps(self) -> int:
        return self.data.shape[1]

    @property
    def frame_count(self) -> int:
        """Number of 25 fps video frames this spectrogram spans."""
        return max(1, int(round(self.steps / MEL_STEPS_PER_FRAME)))


def melspectrogram(w: Waveform) -> MelSpectrogram:
    """Log-mel spectrogram with T = ceil(len / hop) steps (center padding).

    Amplitudes are floored at 1e-5 before the log and the whole clip is
    min-max normalized to [0, 1]; an all-zero clip maps to all zeros.
    """
    if w.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {w.sample_rate}")
    n = len(w.samples)
    if n < MEL_WINDOW:
        raise TooShort(f"need >= {MEL_WINDOW} samples, got {n}")

    n_steps = ceil(n / MEL_HOP)
    pad = MEL_WINDOW // 2
    y = np.pad(w.samples.astype(np.float64), pad, mode="reflect")
    # periodic Hann, standard for STFT analysis
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(MEL_WINDOW) / MEL_WINDOW)
    starts = np.arange(n_steps) * MEL_HOP
    frames = np.stack([y[s:s + MEL_WINDOW] for s in starts]) * win
    mag = np.abs(np.fft.rfft(frames, axis=1))            # (T, bins)
    mel = mag @ _FILTERBANK.T                            # (T, n_mels)
    db = 20.0 * np.log10(np.maximum(MEL_AMP_FLOOR, mel))
    lo, hi = db.min(), db.max()
    if hi - lo < 1e-12:
        norm = np.zeros_like(db)
    else:
        norm = (db - lo) / (hi - lo)
    return MelSpectrogram(norm.T.astype(np.float32))


def mel_step_for_frame(frame_idx: int) -> int:
    """Start mel step of the chunk for a video frame: round(3.2 * i), exactly."""
    return (16 * frame_idx + 2) // 5


def mel_window_for_frame(m: MelSpectrogram, frame_idx: int) -> np.ndarray:
    """16-step conditioning chunk for one video frame, shape (16, 80).

    Windows running past either edge clamp to the valid range and repeat the
    boundary step.
    """
    if not 0 <= frame_idx < m.frame_count:
        raise IndexOutOfRange(
            f"frame {frame_idx} outside [0, {m.frame_count})")
    start = mel_step_for_frame(frame_idx)
    idx = np.clip(np.arange(start, start + MEL_CHUNK_STEPS), 0, m.steps - 1)
    return m.data[:, idx].T.copy()
