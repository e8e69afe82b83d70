"""Motor acoustics and channel simulation.

Converts drive voltage into the electromagnetically induced (EI) sound the
microphone can actually pick up, then degrades it the way a room does:
wideband motor/ambient noise at a target SNR, multipath echoes, Doppler from
a moving appliance, and superposition of several concurrent transmitters.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.signal import butter, fftconvolve, resample_poly, sosfiltfilt

from ._kernels import add_scaled_kernels
from .audio import AudioBuffer

SPEED_OF_SOUND = 343.0

EDGE_IMPULSE = "edge-impulse"
FILTERED_SQUARE = "filtered-square"


@dataclass(frozen=True)
class SpikeKernel:
    """Shape of the acoustic response to one voltage edge.

    ``edge-impulse`` models each switching edge as a knock that rings down:
    exp(-t/decay_time) * sin(2*pi*center_frequency*t). ``filtered-square``
    instead treats the whole +/-1 voltage as the emitted sound, band-limited
    to the audible passband; it keeps the receiver template exactly matched.
    """

    center_frequency: float = 6000.0
    decay_time: float = 0.0005
    mode: str = FILTERED_SQUARE

    def __post_init__(self):
        if self.mode not in (EDGE_IMPULSE, FILTERED_SQUARE):
            raise ValueError(f"unknown EI mode {self.mode!r}")
        if not self.decay_time > 0:
            raise ValueError("decay_time must be positive")


@dataclass(frozen=True)
class ChannelModel:
    """Acoustic path description: SNR, echo taps, and radial motion."""

    snr_db: float = float("inf")
    cir_taps: tuple = ((0.0, 1.0),)
    doppler_speed: float = 0.0
    sound_speed: float = SPEED_OF_SOUND

    def __post_init__(self):
        validate_taps(self.cir_taps)
        if not abs(self.doppler_speed) < self.sound_speed:
            raise ValueError("|doppler_speed| must be below the speed of sound")


def validate_taps(taps: Sequence[tuple[float, float]]) -> None:
    if len(taps) == 0:
        raise ValueError("channel needs at least one tap")
    last = -1.0
    for delay, gain in taps:
        if delay < 0:
            raise ValueError("tap delays must be non-negative")
        if not delay > last:
            raise ValueError("tap delays must be strictly increasing")
        if not np.isfinite(gain):
            raise ValueError("tap gains must be finite")
        last = delay


def render_ei(voltage: AudioBuffer, kernel: SpikeKernel) -> AudioBuffer:
    """Render the EI acoustic signal for an ON/OFF voltage waveform.

    Output is normalized to unit peak (an all-zero signal stays zero,
    e.g. constant voltage in edge-impulse mode produces no edges).
    """
    if len(voltage) == 0:
        raise ValueError("voltage waveform is empty")
    fs = voltage.sample_rate
    if kernel.mode == EDGE_IMPULSE:
        if kernel.center_frequency >= fs / 2:
            raise ValueError("kernel center_frequency must be below Nyquist")
        diffs = np.diff(voltage.samples, prepend=0.0)
        edge_idx = np.nonzero(diffs)[0]
        klen = int(round(8.0 * kernel.decay_time * fs))
        t = np.arange(klen) / fs
        ring = np.exp(-t / kernel.decay_time) * np.sin(2 * np.pi * kernel.center_frequency * t)
        out = np.zeros(len(voltage) + klen)
        add_scaled_kernels(out, edge_idx, diffs[edge_idx], ring)
    else:
        square = 2.0 * voltage.samples - 1.0
        lo = 200.0 / (fs / 2)
        sos = butter(4, [lo, 0.9], btype="band", output="sos")
        out = sosfiltfilt(sos, square)
    peak = np.max(np.abs(out))
    if peak > 0:
        out = out / peak
    return AudioBuffer(out, fs, voltage.start_time)


def add_noise_at_snr(signal: AudioBuffer, snr_db: float, seed: int,
                     ref_power: float | None = None) -> AudioBuffer:
    """Add white Gaussian noise at an exact SNR relative to the signal power.

    The realized noise is rescaled so the measured ratio hits ``snr_db``
    exactly over the buffer. ``ref_power`` overrides the measured signal
    power, for timelines whose silent gaps would otherwise dilute it.
    """
    p_signal = signal.power() if ref_power is None else float(ref_power)
    if not p_signal > 0:
        raise ValueError("signal power must be positive")
    if np.isinf(snr_db):
        return signal.with_samples(signal.samples.copy())
    p_noise = p_signal / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, len(signal))
    noise *= np.sqrt(p_noise / np.mean(noise ** 2))
    return signal.with_samples(signal.samples + noise)


def apply_multipath(signal: AudioBuffer, taps: Sequence[tuple[float, float]]) -> AudioBuffer:
    """Convolve with a sparse impulse response; output grows by the max delay."""
    validate_taps(taps)
    fs = signal.sample_rate
    delays = np.array([int(round(d * fs)) for d, _ in taps])
    gains = np.array([g for _, g in taps], dtype=np.float64)
    h = np.zeros(int(delays.max()) + 1)
    np.add.at(h, delays, gains)
    if h.size == 1:
        return signal.with_samples(signal.samples * h[0])
    return signal.with_samples(fftconvolve(signal.samples, h, mode="full"))


def apply_doppler(signal: AudioBuffer, speed: float,
                  sound_speed: float = SPEED_OF_SOUND) -> AudioBuffer:
    """Time-compress/dilate for a constant radial speed (toward = positive).

    The waveform is resampled by (1 + speed/sound_speed) with a polyphase
    band-limited interpolator at the exact rational ratio, so zero speed is
    the identity.
    """
    if not abs(speed) < sound_speed:
        raise ValueError("|speed| must be below the speed of sound")
    if speed == 0.0:
        return signal.with_samples(signal.samples.copy())
    ratio = Fraction(sound_speed / (sound_speed + speed)).limit_denominator(10000)
    out = resample_poly(signal.samples, ratio.numerator, ratio.denominator)
    return signal.with_samples(out)


def mix_sources(buffers: Sequence[AudioBuffer]) -> AudioBuffer:
    """Sum buffers on a shared timeline, zero-padded outside each one's span."""
    if len(buffers) == 0:
        raise ValueError("nothing to mix")
    fs = buffers[0].sample_rate
    for b in buffers:
        if abs(b.sample_rate - fs) > 1e-9:
            raise ValueError("all buffers must share one sample rate")
    t0 = min(b.start_time for b in buffers)
    offsets = [int(round((b.start_time - t0) * fs)) for b in buffers]
    total = max(off + len(b) for off, b in zip(offsets, buffers))
    out = np.zeros(total)
    for off, b in zip(offsets, buffers):
        out[off:off + len(b)] += b.samples
    return AudioBuffer(out, fs, t0)


def propagate(signal: AudioBuffer, channel: ChannelModel, seed: int,
              noise_ref_power: float | None = None) -> AudioBuffer:
    """Run a clean waveform through Doppler, multipath, then additive noise."""
    out = apply_doppler(signal, channel.doppler_speed, channel.sound_speed)
    out = apply_multipath(out, channel.cir_taps)
    if np.isinf(channel.snr_db):
        return out
    return add_noise_at_snr(out, channel.snr_db, seed, ref_power=noise_ref_power)
