import numpy as np
import pytest

from hyperlips.audio import (Waveform, mel_filterbank,
                             mel_step_for_frame, mel_window_for_frame,
                             melspectrogram, normalize_waveform, read_wav,
                             write_wav)
from hyperlips.errors import IndexOutOfRange, TooShort


def tone(seconds=1.0, hz=220.0, sr=16000, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return (amp * np.sin(2 * np.pi * hz * t)).astype(np.float32)


def oracle_mel(samples):
    """Independent mel computation: explicit frame loop, no stride tricks."""
    n_steps = int(np.ceil(len(samples) / 200))
    padded = np.pad(samples.astype(np.float64), 400, mode="reflect")
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(800) / 800)
    fb = mel_filterbank()
    cols = []
    for s in range(n_steps):
        frame = padded[s * 200:s * 200 + 800] * window
        mag = np.abs(np.fft.rfft(frame))
        cols.append(fb @ mag)
    m = 20.0 * np.log10(np.maximum(1e-5, np.array(cols).T))
    lo, hi = m.min(), m.max()
    if hi - lo < 1e-12:
        return np.zeros_like(m, dtype=np.float32)
    return ((m - lo) / (hi - lo)).astype(np.float32)


class TestNormalizeWaveform:
    def test_stereo_44k_downmix_resample(self):
        """1 s of 44.1 kHz stereo becomes 16000 mono samples."""
        sr = 44100
        t = np.arange(sr) / sr
        stereo = np.stack([np.sin(2 * np.pi * 220 * t),
                           np.sin(2 * np.pi * 440 * t)], axis=1)
        w = normalize_waveform(stereo.astype(np.float32), sr)
        assert w.sample_rate == 16000
        assert w.samples.ndim == 1
        assert len(w.samples) == 16000

    def test_silent_half_second(self):
        w = normalize_waveform(np.zeros(8000, np.float32), 16000)
        assert len(w.samples) == 8000
        assert np.all(w.samples == 0.0)

    def test_amplitudes_clipped_to_unit_range(self):
        w = normalize_waveform(np.array([2.0, -3.0, 0.5], np.float32), 16000)
        assert w.samples.max() <= 1.0
        assert w.samples.min() >= -1.0


class TestWavRoundTrip:
    def test_write_read_preserves_signal(self, tmp_path):
        x = tone(0.5)
        p = tmp_path / "t.wav"
        write_wav(Waveform(x, 16000), p)
        back = read_wav(p)
        assert back.sample_rate == 16000
        assert len(back.samples) == len(x)
        # int16 quantization bound
        assert np.abs(back.samples - x).max() <= 1.0 / 32767 + 1e-6


class TestMelspectrogram:
    def test_one_second_gives_80_steps(self):
        m = melspectrogram(Waveform(tone(1.0), 16000))
        assert m.data.shape == (80, 80)
        assert m.steps == 80

    def test_800_samples_gives_4_steps(self):
        m = melspectrogram(Waveform(tone(0.05), 16000))
        assert m.steps == 4

    def test_matches_independent_stft(self):
        rng = np.random.default_rng(5)
        x = (rng.standard_normal(8000) * 0.1).astype(np.float32)
        m = melspectrogram(Waveform(x, 16000))
        ref = oracle_mel(x)
        assert m.data.shape == ref.shape
        assert np.abs(m.data - ref).max() < 1e-4

    def test_all_zero_input_constant_columns(self):
        m = melspectrogram(Waveform(np.zeros(4000, np.float32), 16000))
        first = m.data[:, :1]
        assert np.all(m.data == first)

    def test_too_short_raises(self):
        with pytest.raises(TooShort):
            melspectrogram(Waveform(np.zeros(799, np.float32), 16000))

    def test_values_in_unit_range(self):
        m = melspectrogram(Waveform(tone(0.3), 16000))
        assert m.data.min() >= 0.0
        assert m.data.max() <= 1.0

    def test_deterministic(self):
        x = tone(0.4, hz=330)
        a = melspectrogram(Waveform(x, 16000)).data
        b = melspectrogram(Waveform(x.copy(), 16000)).data
        assert np.array_equal(a, b)

    def test_frame_count_one_second(self):
        m = melspectrogram(Waveform(tone(1.0), 16000))
        assert m.frame_count == 25


class TestMelWindowForFrame:
    def setup_method(self):
        self.mel = melspectrogram(Waveform(tone(2.0), 16000))

    def test_frame_zero_is_first_16_steps(self):
        chunk = mel_window_for_frame(self.mel, 0)
        assert chunk.shape == (16, 80)
        assert np.array_equal(chunk, self.mel.data[:, 0:16].T)

    def test_frame_25_starts_at_step_80(self):
        chunk = mel_window_for_frame(self.mel, 25)
        assert np.array_equal(chunk, self.mel.data[:, 80:96].T)

    def test_start_index_law(self):
        """Start step == round(3.2 * i) for every valid frame."""
        for i in range(50):
            assert mel_step_for_frame(i) == round(3.2 * i)

    def test_beyond_duration_raises(self):
        with pytest.raises(IndexOutOfRange):
            mel_window_for_frame(self.mel, self.mel.frame_count)
        with pytest.raises(IndexOutOfRange):
            mel_window_for_frame(self.mel, -1)

    def test_edge_window_pads_by_repetition(self):
        last = self.mel.frame_count - 1
        chunk = mel_window_for_frame(self.mel, last)
        start = mel_step_for_frame(last)
        n_real = self.mel.steps - start
        if n_real < 16:
            tail = chunk[n_real:]
            assert np.all(tail == chunk[n_real - 1])


class TestFilterbank:
    def test_shape_and_coverage(self):
        fb = mel_filterbank()
        assert fb.shape == (80, 401)
        assert np.all(fb >= 0.0)
        # every filter has some mass
        assert np.all(fb.sum(axis=1) > 0.0)
