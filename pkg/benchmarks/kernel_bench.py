#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallbacks.

Usage: python benchmarks/kernel_bench.py [--repeats N]

Times the three hot kernels on workloads shaped like real use: rendering a
60 s symbol's voltage, scattering edge rings into a buffer, and scanning a
correlation window for peaks. The numba timings exclude the first (compile)
call. Also times one full stream-detection slide for end-to-end context.
"""

import argparse
import time

import numpy as np

from vpwm import _kernels as K
from vpwm import DetectorConfig, FrameCodec, Registry, StreamDetector
from vpwm.audio import AudioBuffer
from vpwm.symbols import generate_periods

FS = 24000.0


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_fill_pulses(repeats):
    sym = generate_periods(42, 60.0)
    ends = np.cumsum(sym.periods)
    starts_t = ends - sym.periods
    n = int(round(sym.length * FS))
    on_starts = np.round(starts_t * FS).astype(np.int64)
    on_stops = np.round((starts_t + 0.5 * sym.periods) * FS).astype(np.int64)
    t_np = _time(lambda: K.fill_pulses_np(n, on_starts, on_stops), repeats)
    if K.HAVE_NUMBA:
        K.fill_pulses_nb(n, on_starts, on_stops)  # compile
        t_nb = _time(lambda: K.fill_pulses_nb(n, on_starts, on_stops), repeats)
    else:
        t_nb = float("nan")
    return "fill_pulses (60 s symbol)", t_np, t_nb


def bench_edge_kernels(repeats):
    rng = np.random.default_rng(0)
    n = int(60 * FS)
    positions = np.sort(rng.integers(0, n, 96_000)).astype(np.int64)
    scales = rng.choice([-1.0, 1.0], positions.size)
    kernel = np.exp(-np.arange(96) / 12.0) * np.sin(np.arange(96))
    out = np.zeros(n + kernel.size)

    def run_np():
        out[:] = 0.0
        K.add_scaled_kernels_np(out, positions, scales, kernel)

    t_np = _time(run_np, repeats)
    if K.HAVE_NUMBA:
        K.add_scaled_kernels_nb(out, positions, scales, kernel)  # compile

        def run_nb():
            out[:] = 0.0
            K.add_scaled_kernels_nb(out, positions, scales, kernel)

        t_nb = _time(run_nb, repeats)
    else:
        t_nb = float("nan")
    return "add_scaled_kernels (96k edges)", t_np, t_nb


def bench_local_peaks(repeats):
    rng = np.random.default_rng(1)
    a = np.abs(rng.normal(0, 1, 500_000))
    thr = float(np.percentile(a, 99.9))
    t_np = _time(lambda: K.local_peaks_np(a, thr), repeats)
    if K.HAVE_NUMBA:
        K.local_peaks_nb(a, thr)  # compile
        t_nb = _time(lambda: K.local_peaks_nb(a, thr), repeats)
    else:
        t_nb = float("nan")
    return "local_peaks (500k lags)", t_np, t_nb


def bench_stream_slide(repeats):
    codec = FrameCodec(symbol_length=2.0)
    reg = Registry()
    for i in range(9):
        reg.register(100 + i, codec, FS)
    rng = np.random.default_rng(2)
    audio = rng.normal(0, 1, int(10.5 * FS))

    def run():
        engine = StreamDetector(reg, DetectorConfig())
        engine.feed(AudioBuffer(audio, FS))
        engine.flush()

    t = _time(run, max(1, repeats // 3))
    window = int(round(1.25 * 2.0 * FS))
    slide = int(round(0.25 * 2.0 * FS))
    slides = (audio.size - window) // slide + 1
    return "stream detection (9 x 2 s templates)", t / slides


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"numba available: {K.HAVE_NUMBA}; dispatch uses numba: {K.USE_NUMBA}")
    print(f"{'kernel':38s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, t_np, t_nb in (bench_fill_pulses(args.repeats),
                             bench_edge_kernels(args.repeats),
                             bench_local_peaks(args.repeats)):
        ratio = t_np / t_nb if t_nb == t_nb and t_nb > 0 else float("nan")
        print(f"{name:38s} {t_np * 1e3:8.2f}ms {t_nb * 1e3:8.2f}ms {ratio:7.2f}x")
    name, per_slide = bench_stream_slide(args.repeats)
    budget = 0.25 * 2.0
    print(f"{name:38s} {per_slide * 1e3:8.2f}ms per 500 ms slide "
          f"({budget / per_slide:.0f}x real time)")


if __name__ == "__main__":
    main()
