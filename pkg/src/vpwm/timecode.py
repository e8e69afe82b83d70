"""Bit <-> inter-symbol-interval codec and achievable data rate.

Data bits ride in the start-to-start intervals between repeated symbols.
Each interval carries N bits: the N-bit group value v maps offset-binary to
K = v - 2^(N-1), and the interval is T_min + K*delta. T_min is sized so even
the most negative shift leaves a 25% guard on top of the symbol length:

    T_min = (5/4) * L_sym + 2^(N-1) * delta

A frame is M symbols, so M-1 intervals carry (M-1)*N bits while each symbol
also implicitly conveys the 16-bit appliance ID.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .symbols import VpwmSymbol


@dataclass(frozen=True)
class FrameCodec:
    """Interval-coding parameters shared by transmitter and receiver."""

    bits_per_interval: int = 3
    resolution: float = 0.020
    symbol_length: float = 1.0
    symbols_per_frame: int = 4
    id_bits: int = 16

    def __post_init__(self):
        if self.bits_per_interval < 1:
            raise ValueError("bits_per_interval must be >= 1")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if not self.symbol_length > 0:
            raise ValueError("symbol_length must be positive")
        if self.symbols_per_frame < 1:
            raise ValueError("symbols_per_frame must be >= 1")

    @property
    def payload_bits(self) -> int:
        return (self.symbols_per_frame - 1) * self.bits_per_interval

    @property
    def k_half_range(self) -> int:
        return 1 << (self.bits_per_interval - 1)


def t_min(codec: FrameCodec) -> float:
    """Minimum start-to-start interval that avoids symbol overlap."""
    return 1.25 * codec.symbol_length + codec.k_half_range * codec.resolution


def max_interval(codec: FrameCodec) -> float:
    """Largest encodable interval (most positive shift)."""
    return t_min(codec) + (codec.k_half_range - 1) * codec.resolution


def frame_gap_limit(codec: FrameCodec) -> float:
    """Gap beyond which consecutive heartbeats belong to different frames."""
    return 1.5 * (t_min(codec) + codec.k_half_range * codec.resolution)


def as_bits(bits: Iterable[int] | str) -> list[int]:
    """Normalize a bit container ('0'/'1' string or int iterable) to a list."""
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    out = [int(b) for b in bits]
    if any(b not in (0, 1) for b in out):
        raise ValueError("bits must be 0 or 1")
    return out


def bits_to_hex(bits: Iterable[int] | str) -> str:
    """Pack bits (big-endian) into a fixed-width hex string."""
    b = as_bits(bits)
    if not b:
        return ""
    value = int("".join(map(str, b)), 2)
    return format(value, f"0{math.ceil(len(b) / 4)}x")


def hex_to_bits(hx: str, n_bits: int) -> list[int]:
    value = int(hx, 16)
    return [(value >> (n_bits - 1 - i)) & 1 for i in range(n_bits)]


def encode_intervals(bits: Iterable[int] | str, codec: FrameCodec) -> list[float]:
    """Map (M-1)*N payload bits to M-1 start-to-start intervals in seconds."""
    b = as_bits(bits)
    if len(b) != codec.payload_bits:
        raise ValueError(f"expected {codec.payload_bits} bits, got {len(b)}")
    n = codec.bits_per_interval
    base = t_min(codec)
    intervals = []
    for g in range(0, len(b), n):
        value = int("".join(map(str, b[g:g + n])), 2)
        k = value - codec.k_half_range
        intervals.append(base + k * codec.resolution)
    return intervals


def decode_intervals(intervals: Sequence[float], codec: FrameCodec) -> list[int]:
    """Invert :func:`encode_intervals`; tolerates timing error below delta/2.

    The shift index is recovered by rounding and clamped into the valid
    offset-binary range, so a wild interval corrupts only its own group.
    """
    if len(intervals) == 0:
        raise ValueError("no intervals to decode")
    n = codec.bits_per_interval
    base = t_min(codec)
    half = codec.k_half_range
    bits: list[int] = []
    for iv in intervals:
        k = int(math.floor((iv - base) / codec.resolution + 0.5))
        k = max(-half, min(half - 1, k))
        value = k + half
        bits.extend((value >> (n - 1 - i)) & 1 for i in range(n))
    return bits


def data_rate(codec: FrameCodec) -> float:
    """Average payload+ID bits per second for a frame of M symbols.

    The expected interval equals T_min because the shift is zero-mean over a
    uniform payload.
    """
    m = codec.symbols_per_frame
    total_bits = (m - 1) * codec.bits_per_interval + m * codec.id_bits
    duration = codec.symbol_length + (m - 1) * t_min(codec)
    return total_bits / duration


def optimal_n(symbol_length: float, resolution: float, symbols_per_frame: int,
              n_max: int = 8) -> int:
    """Bits-per-interval that maximizes :func:`data_rate`; ties pick smaller N."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    best_n, best_rate = 1, -1.0
    for n in range(1, n_max + 1):
        rate = data_rate(FrameCodec(bits_per_interval=n, resolution=resolution,
                                    symbol_length=symbol_length,
                                    symbols_per_frame=symbols_per_frame))
        if rate > best_rate + 1e-12:
            best_n, best_rate = n, rate
    return best_n


@dataclass(frozen=True)
class TransmissionSchedule:
    """Absolute start times for the M copies of one symbol in a frame.

    Gaps are start-to-start; they must at least cover the symbol itself so
    copies never overlap on air. (The codec's T_min construction guarantees
    the stronger 1.25x margin relative to the requested symbol length.)
    """

    symbol: VpwmSymbol
    start_times: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.start_times)
        object.__setattr__(self, "start_times", times)
        gaps = np.diff(times)
        if np.any(gaps <= 0):
            raise ValueError("start times must be strictly increasing")
        if np.any(gaps < self.symbol.length):
            raise ValueError("schedule gaps must not overlap consecutive symbols")


def schedule(symbol: VpwmSymbol, bits: Iterable[int] | str, codec: FrameCodec,
             t0: float = 0.0) -> TransmissionSchedule:
    """Lay out one frame: M symbol starts separated by the encoded intervals."""
    intervals = encode_intervals(bits, codec)
    times = [t0]
    for iv in intervals:
        times.append(times[-1] + iv)
    return TransmissionSchedule(symbol=symbol, start_times=tuple(times))
