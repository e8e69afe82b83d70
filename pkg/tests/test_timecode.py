"""Interval codec arithmetic, rate formula, and round-trip properties."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpwm import (FrameCodec, data_rate, decode_intervals, encode_intervals,
                  generate_periods, optimal_n, schedule, t_min)
from vpwm.timecode import bits_to_hex, frame_gap_limit, hex_to_bits


def _codec(n=3, delta=0.020, length=1.0, m=4):
    return FrameCodec(bits_per_interval=n, resolution=delta,
                      symbol_length=length, symbols_per_frame=m)


# ---------------------------------------------------------------------------
# t_min and encoding
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("length,n,expected", [
    (1.0, 3, 1.33),
    (2.0, 4, 2.66),
    (0.5, 2, 0.665),
])
def test_t_min_values(length, n, expected):
    assert t_min(_codec(n=n, length=length)) == pytest.approx(expected, abs=1e-12)


def test_encode_examples():
    codec = _codec()
    assert encode_intervals("100011111", codec) == pytest.approx([1.33, 1.31, 1.39])
    assert encode_intervals("000" * 3, codec)[0] == pytest.approx(1.25)
    assert encode_intervals("000" * 3, codec)[0] == pytest.approx(
        1.25 * codec.symbol_length)


def test_encode_wrong_bit_count():
    with pytest.raises(ValueError):
        encode_intervals("1010", _codec())


def test_decode_examples():
    codec = _codec()
    assert decode_intervals([1.33, 1.31, 1.39], codec) == [1, 0, 0, 0, 1, 1, 1, 1, 1]


def test_decode_guard_interval():
    codec = _codec()
    base = encode_intervals("011010110", codec)
    nudged = [iv + 0.009 for iv in base]
    assert decode_intervals(nudged, codec) == [0, 1, 1, 0, 1, 0, 1, 1, 0]
    crossed = [base[0] + 0.011] + base[1:]
    got = decode_intervals(crossed, codec)
    # first group decodes to the adjacent shift index
    assert got[:3] == [0, 1, 0 + 1] or got[:3] == [1, 0, 0]
    assert got[3:] == [0, 1, 0, 1, 1, 0]


def test_decode_clamps_outliers():
    codec = _codec()
    bits = decode_intervals([99.0, 0.1, 1.33], codec)
    assert bits[:3] == [1, 1, 1]  # clamped high
    assert bits[3:6] == [0, 0, 0]  # clamped low
    assert bits[6:] == [1, 0, 0]


def test_decode_empty():
    with pytest.raises(ValueError):
        decode_intervals([], _codec())


def test_exhaustive_roundtrip_small():
    for n, m in itertools.product((1, 2, 3, 4), (2, 3, 4)):
        codec = _codec(n=n, m=m)
        for value in range(2 ** codec.payload_bits):
            bits = [(value >> (codec.payload_bits - 1 - i)) & 1
                    for i in range(codec.payload_bits)]
            assert decode_intervals(encode_intervals(bits, codec), codec) == bits


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(2, 4), st.data())
def test_roundtrip_with_jitter(n, m, data):
    codec = _codec(n=n, m=m)
    bits = data.draw(st.lists(st.integers(0, 1), min_size=codec.payload_bits,
                              max_size=codec.payload_bits))
    eps = data.draw(st.lists(
        st.floats(-0.0099, 0.0099, allow_nan=False), min_size=m - 1, max_size=m - 1))
    intervals = [iv + e for iv, e in zip(encode_intervals(bits, codec), eps)]
    assert decode_intervals(intervals, codec) == bits


# ---------------------------------------------------------------------------
# data rate
# ---------------------------------------------------------------------------

def _rate_oracle(length, delta, m, n):
    tmin = 1.25 * length + 2 ** (n - 1) * delta
    return ((m - 1) * n + m * 16) / (length + (m - 1) * tmin)


@pytest.mark.parametrize("length,n,expected", [
    (1.0, 3, 14.6293),
    (2.0, 4, 7.6152),
    (0.5, 2, 28.0561),
    (0.25, 1, 53.7074),
])
def test_data_rate_values(length, n, expected):
    codec = _codec(n=n, length=length)
    assert data_rate(codec) == pytest.approx(expected, abs=5e-4)
    assert data_rate(codec) == pytest.approx(_rate_oracle(length, 0.020, 4, n),
                                             rel=1e-12)


def test_data_rate_id_only_frame():
    codec = _codec(n=3, length=2.0, m=1)
    assert data_rate(codec) == pytest.approx(16.0 / 2.0)


@pytest.mark.parametrize("length,expected_n", [
    (1.0, 3),
    (0.5, 2),
    (2.0, 4),
])
def test_optimal_n(length, expected_n):
    assert optimal_n(length, 0.020, 4) == expected_n
    # independent exhaustive sweep
    rates = {n: _rate_oracle(length, 0.020, 4, n) for n in range(1, 9)}
    assert max(rates, key=rates.get) == expected_n


def test_optimal_n_05_rate():
    n = optimal_n(0.5, 0.020, 4)
    assert data_rate(_codec(n=n, length=0.5)) == pytest.approx(28.06, abs=0.005)


def test_rate_decreases_with_symbol_length():
    rates = [data_rate(_codec(length=L)) for L in (0.25, 0.5, 1.0, 2.0)]
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_rate_unimodal_over_n():
    for length in (0.0625, 0.125, 0.25, 0.5, 1.0, 2.0):
        rates = [_rate_oracle(length, 0.020, 4, n) for n in range(1, 9)]
        peak = int(np.argmax(rates))
        assert all(a < b or abs(a - b) < 1e-12 for a, b in zip(rates[:peak], rates[1:peak + 1]))
        assert all(a > b or abs(a - b) < 1e-12 for a, b in zip(rates[peak:], rates[peak + 1:]))


# ---------------------------------------------------------------------------
# scheduling
# ---------------------------------------------------------------------------

def test_schedule_single_interval():
    codec = _codec(m=2)
    sym = generate_periods(42, 1.0)
    sched = schedule(sym, "100", codec, t0=1.0)
    assert sched.start_times == pytest.approx((1.0, 1.0 + t_min(codec)))


def test_schedule_all_zero_payload_uniform_spacing():
    codec = _codec()
    sym = generate_periods(42, 1.0)
    sched = schedule(sym, "000" * 3, codec, t0=0.0)
    gaps = np.diff(sched.start_times)
    assert np.allclose(gaps, 1.25)


def test_schedule_gaps_never_overlap():
    codec = _codec()
    sym = generate_periods(42, 1.0)
    rng = np.random.default_rng(3)
    for _ in range(50):
        bits = list(rng.integers(0, 2, codec.payload_bits))
        gaps = np.diff(schedule(sym, bits, codec).start_times)
        assert np.all(gaps >= 1.25 * codec.symbol_length - 1e-9)


def test_frame_gap_limit_exceeds_max_interval():
    codec = _codec()
    assert frame_gap_limit(codec) > max(encode_intervals("111" * 3, codec))


# ---------------------------------------------------------------------------
# bit/hex helpers
# ---------------------------------------------------------------------------

def test_hex_roundtrip():
    bits = [1, 0, 0, 0, 1, 1, 1, 1, 1]
    assert bits_to_hex(bits) == "11f"
    assert hex_to_bits("11f", 9) == bits
    assert bits_to_hex([0, 0, 0, 1]) == "1"
    assert hex_to_bits("1", 4) == [0, 0, 0, 1]
