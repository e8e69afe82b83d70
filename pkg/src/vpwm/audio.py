"""Sampled audio container plus WAV import/export.

All signal-path operations exchange :class:`AudioBuffer` values: a 1-D float
sample array, its sample rate, and an absolute start time so buffers from
different sources can be placed on one timeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

DEFAULT_SAMPLE_RATE = 24000.0


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Uniformly sampled mono waveform on a shared timeline."""

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be a 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def with_samples(self, samples: np.ndarray) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate, self.start_time)

    def power(self) -> float:
        """Mean square of the samples."""
        if self.samples.size == 0:
            return 0.0
        return float(np.mean(self.samples ** 2))


def write_wav(path, buf: AudioBuffer, encoding: str = "float32") -> None:
    """Write a mono WAV file, either 32-bit float or 16-bit PCM."""
    if encoding == "float32":
        data = buf.samples.astype(np.float32)
    elif encoding == "pcm16":
        peak = np.max(np.abs(buf.samples)) if buf.samples.size else 0.0
        scale = 32767.0 / peak if peak > 1.0 else 32767.0
        data = np.round(buf.samples * scale).astype(np.int16)
    else:
        raise ValueError(f"unknown encoding {encoding!r} (use 'float32' or 'pcm16')")
    wavfile.write(path, int(round(buf.sample_rate)), data)


def read_wav(path, target_rate: float | None = None) -> AudioBuffer:
    """Load a WAV file as a mono float buffer, resampling if asked.

    PCM integer formats are scaled to [-1, 1]; multichannel input is averaged
    down to mono. When ``target_rate`` differs from the file rate the signal
    is resampled with a polyphase filter at the exact rational rate ratio.
    """
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if target_rate is not None and abs(target_rate - rate) > 1e-9:
        ratio = Fraction(float(target_rate) / float(rate)).limit_denominator(10000)
        samples = resample_poly(samples, ratio.numerator, ratio.denominator)
        rate = target_rate
    return AudioBuffer(samples, float(rate))
