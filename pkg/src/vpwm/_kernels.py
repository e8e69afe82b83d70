"""Hot numeric kernels with numba-accelerated and pure-numpy implementations.

The numba path is used by default. Set the environment variable
``VPWM_NO_NUMBA=1`` (or install without numba) to force the numpy fallback.
Both paths are exact: they produce bit-identical arrays, which the test
suite asserts. ``benchmarks/kernel_bench.py`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np


def _env_disables_numba() -> bool:
    return os.environ.get("VPWM_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


try:  # pragma: no cover - import guard
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disables_numba()


# ---------------------------------------------------------------------------
# numpy implementations (always available)
# ---------------------------------------------------------------------------

def fill_pulses_np(n: int, on_starts: np.ndarray, on_stops: np.ndarray) -> np.ndarray:
    """Build an ON/OFF waveform: sample i is 1.0 inside any [start, stop) run."""
    edges = np.zeros(n + 1)
    np.add.at(edges, np.clip(on_starts, 0, n), 1.0)
    np.add.at(edges, np.clip(on_stops, 0, n), -1.0)
    return (np.cumsum(edges[:n]) > 0).astype(np.float64)


def add_scaled_kernels_np(out: np.ndarray, positions: np.ndarray,
                          scales: np.ndarray, kernel: np.ndarray) -> None:
    """Accumulate ``scales[k] * kernel`` into ``out`` at each position, in order."""
    klen = kernel.size
    for k in range(positions.size):
        i = positions[k]
        out[i:i + klen] += scales[k] * kernel


def local_peaks_np(values: np.ndarray, threshold: float) -> np.ndarray:
    """Indices of strict-left / non-strict-right local maxima above threshold."""
    if values.size < 3:
        return np.empty(0, dtype=np.int64)
    mid = values[1:-1]
    mask = (mid > threshold) & (mid > values[:-2]) & (mid >= values[2:])
    return np.nonzero(mask)[0].astype(np.int64) + 1


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _fill_pulses_nb(n, on_starts, on_stops):
        out = np.zeros(n)
        for k in range(on_starts.size):
            i0 = on_starts[k]
            i1 = on_stops[k]
            if i0 < 0:
                i0 = 0
            if i1 > n:
                i1 = n
            for i in range(i0, i1):
                out[i] = 1.0
        return out

    @numba.njit(cache=True)
    def _add_scaled_kernels_nb(out, positions, scales, kernel):
        klen = kernel.size
        for k in range(positions.size):
            i = positions[k]
            s = scales[k]
            for j in range(klen):
                out[i + j] += s * kernel[j]

    @numba.njit(cache=True)
    def _local_peaks_nb(values, threshold):
        idx = np.empty(values.size, dtype=np.int64)
        m = 0
        for i in range(1, values.size - 1):
            v = values[i]
            if v > threshold and v > values[i - 1] and v >= values[i + 1]:
                idx[m] = i
                m += 1
        return idx[:m]


def fill_pulses_nb(n: int, on_starts: np.ndarray, on_stops: np.ndarray) -> np.ndarray:
    return _fill_pulses_nb(n, on_starts, on_stops)


def add_scaled_kernels_nb(out: np.ndarray, positions: np.ndarray,
                          scales: np.ndarray, kernel: np.ndarray) -> None:
    _add_scaled_kernels_nb(out, positions, scales, kernel)


def local_peaks_nb(values: np.ndarray, threshold: float) -> np.ndarray:
    return _local_peaks_nb(values, threshold)


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------

def fill_pulses(n: int, on_starts: np.ndarray, on_stops: np.ndarray) -> np.ndarray:
    on_starts = np.ascontiguousarray(on_starts, dtype=np.int64)
    on_stops = np.ascontiguousarray(on_stops, dtype=np.int64)
    if USE_NUMBA:
        return fill_pulses_nb(n, on_starts, on_stops)
    return fill_pulses_np(n, on_starts, on_stops)


def add_scaled_kernels(out: np.ndarray, positions: np.ndarray,
                       scales: np.ndarray, kernel: np.ndarray) -> None:
    positions = np.ascontiguousarray(positions, dtype=np.int64)
    scales = np.ascontiguousarray(scales, dtype=np.float64)
    if USE_NUMBA:
        add_scaled_kernels_nb(out, positions, scales, kernel)
    else:
        add_scaled_kernels_np(out, positions, scales, kernel)


def local_peaks(values: np.ndarray, threshold: float) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    if USE_NUMBA:
        return local_peaks_nb(values, float(threshold))
    return local_peaks_np(values, float(threshold))
