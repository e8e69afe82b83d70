"""V-PWM symbol generation, voltage rendering, and symbol-level analysis.

An appliance ID seeds a deterministic generator that draws per-pulse
switching periods uniformly from the motor's safe range. The resulting pulse
sequence is the appliance's unique transmission symbol: the transmitter
renders it as an ON/OFF voltage waveform (with whatever duty cycle the
current motor mode needs) and the receiver renders the same sequence at 50%
duty as a +/-1 correlation template.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import correlate, welch

from ._kernels import fill_pulses
from .audio import DEFAULT_SAMPLE_RATE, AudioBuffer

_MASK64 = (1 << 64) - 1

APPLIANCE_ID_BITS = 16
MAX_APPLIANCE_ID = (1 << APPLIANCE_ID_BITS) - 1

#: Alias documenting that appliance IDs are plain unsigned 16-bit ints.
ApplianceId = int


def validate_appliance_id(appliance_id: int) -> int:
    if not isinstance(appliance_id, (int, np.integer)):
        raise ValueError(f"appliance id must be an integer, got {appliance_id!r}")
    if not 0 <= appliance_id <= MAX_APPLIANCE_ID:
        raise ValueError(f"appliance id {appliance_id} outside [0, {MAX_APPLIANCE_ID}]")
    return int(appliance_id)


class Splitmix64:
    """Pinned 64-bit split-mix generator; bit-exact across implementations.

    state' = state + 0x9E3779B97F4A7C15
    z = state'; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9
    z = (z ^ z>>27) * 0x94D049BB133111EB; output = z ^ z>>31
    (all arithmetic mod 2^64)
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform float in [0, 1) with 64-bit resolution."""
        return self.next_u64() / 2.0 ** 64


@dataclass(frozen=True)
class MotorProfile:
    """Switching-period limits a motor tolerates while rotating steadily.

    Every switching period must stay below the motor's response time
    constant, otherwise rotation ripples and the motor wears.
    """

    time_constant: float = 0.010
    min_switch_period: float = 0.0005
    max_switch_period: float = 0.002

    def __post_init__(self):
        if not 0 < self.min_switch_period < self.max_switch_period:
            raise ValueError("need 0 < min_switch_period < max_switch_period")
        if not self.max_switch_period < self.time_constant:
            raise ValueError("max_switch_period must be below the motor time constant")


DEFAULT_PROFILE = MotorProfile()


@dataclass(frozen=True)
class VpwmSymbol:
    """A finite pseudo-random pulse sequence tied to one appliance ID."""

    id: int
    periods: np.ndarray
    length: float
    duty_cycle: float = 0.5

    def __post_init__(self):
        periods = np.asarray(self.periods, dtype=np.float64)
        object.__setattr__(self, "periods", periods)
        if not 0.0 < self.duty_cycle < 1.0:
            raise ValueError("duty_cycle must lie in (0, 1)")
        if abs(float(np.sum(periods)) - self.length) > 1e-9:
            raise ValueError("length must equal the sum of periods")

    @property
    def pulse_count(self) -> int:
        return self.periods.size


@dataclass(frozen=True, order=True)
class DutyEvent:
    """A runtime mode change: from ``at`` seconds on, pulses use ``new_duty``."""

    at: float
    new_duty: float

    def __post_init__(self):
        if not 0.0 < self.new_duty < 1.0:
            raise ValueError("new_duty must lie in (0, 1)")


def expand_seed(appliance_id: int) -> Splitmix64:
    """Expand a 16-bit appliance ID into the pinned period generator."""
    return Splitmix64(validate_appliance_id(appliance_id))


def generate_periods(appliance_id: int, duration: float,
                     profile: MotorProfile = DEFAULT_PROFILE,
                     duty_cycle: float = 0.5) -> VpwmSymbol:
    """Draw switching periods until their sum first reaches ``duration``.

    Periods are i.i.d. uniform over [min_switch_period, max_switch_period],
    so the actual symbol length overshoots the request by less than one
    maximum period. The same inputs always give the identical period list.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    rng = expand_seed(appliance_id)
    lo = profile.min_switch_period
    span = profile.max_switch_period - profile.min_switch_period
    periods = []
    total = 0.0
    while total < duration:
        p = lo + rng.next_unit() * span
        periods.append(p)
        total += p
    arr = np.array(periods)
    return VpwmSymbol(id=int(appliance_id), periods=arr,
                      length=float(np.sum(arr)), duty_cycle=duty_cycle)


def _duty_per_pulse(symbol: VpwmSymbol, duty_events: Sequence[DutyEvent],
                    starts: np.ndarray) -> np.ndarray:
    duties = np.full(symbol.pulse_count, symbol.duty_cycle)
    if not duty_events:
        return duties
    last = -np.inf
    for ev in duty_events:
        if not last < ev.at:
            raise ValueError("duty events must be strictly increasing in time")
        last = ev.at
        if not 0.0 <= ev.at < symbol.length:
            raise ValueError(f"duty event at {ev.at}s outside [0, {symbol.length})")
    # each event takes effect at the first pulse starting at or after it
    for ev in duty_events:
        k = int(np.searchsorted(starts, ev.at - 1e-12))
        duties[k:] = ev.new_duty
    return duties


def render_voltage(symbol: VpwmSymbol, duty_events: Sequence[DutyEvent] = (),
                   sample_rate: float = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Render the ON/OFF drive voltage as a {0, 1} waveform.

    Edge times are accumulated in continuous time and each edge is rounded
    to its nearest sample independently, so rounding never drifts. A duty
    event takes effect at the next pulse boundary.
    """
    min_period = float(np.min(symbol.periods))
    if sample_rate < 2.0 / min_period:
        raise ValueError(
            f"sample_rate {sample_rate} Hz below Nyquist 2/T_min = {2.0 / min_period:.0f} Hz")
    ends = np.cumsum(symbol.periods)
    starts = ends - symbol.periods
    duties = _duty_per_pulse(symbol, tuple(duty_events), starts)
    n = int(round(symbol.length * sample_rate))
    on_starts = np.round(starts * sample_rate).astype(np.int64)
    on_stops = np.round((starts + duties * symbol.periods) * sample_rate).astype(np.int64)
    return AudioBuffer(fill_pulses(n, on_starts, on_stops), sample_rate)


def normalize_template(symbol: VpwmSymbol,
                       sample_rate: float = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Receiver-side template: the symbol at 50% duty, mapped to {-1, +1}.

    The receiver only knows the switching periods, not the transmitter's
    current duty cycle, so templates are always rendered at the 50% default.
    """
    fifty = VpwmSymbol(id=symbol.id, periods=symbol.periods,
                       length=symbol.length, duty_cycle=0.5)
    v = render_voltage(fifty, (), sample_rate)
    return v.with_samples(2.0 * v.samples - 1.0)


def cross_correlate(a: AudioBuffer, b: AudioBuffer) -> np.ndarray:
    """Sliding dot product of template ``b`` against ``a`` at every full overlap.

    Returns ``len(a) - len(b) + 1`` values; entry k is sum_j b[j] * a[k+j].
    """
    if abs(a.sample_rate - b.sample_rate) > 1e-9:
        raise ValueError("buffers must share one sample rate")
    if len(b) > len(a):
        raise ValueError("template must not be longer than the signal")
    return correlate(a.samples, b.samples, mode="valid", method="fft")


def psd_profile(signal: AudioBuffer, segment: float) -> tuple[np.ndarray, np.ndarray]:
    """Averaged-periodogram PSD with ``segment``-second windows.

    Returns (frequencies, density). Feed the density to
    :func:`tonal_prominence` to grade how tonal the sound is.
    """
    nper = int(round(segment * signal.sample_rate))
    if nper > len(signal):
        raise ValueError("segment longer than the signal")
    return welch(signal.samples, fs=signal.sample_rate, nperseg=nper)


def tonal_prominence(psd: np.ndarray) -> float:
    """max/median PSD ratio in dB, the stand-in for perceived tonality.

    Energy piled into discrete harmonics is what makes a motor sound
    annoying; a flat (noise-like) spectrum scores near 0 dB. The DC bin is
    excluded.
    """
    p = np.asarray(psd, dtype=np.float64)[1:]
    med = float(np.median(p))
    if med <= 0.0:
        return float("inf")
    return float(10.0 * np.log10(np.max(p) / med))
