"""The numba and numpy kernel paths must agree bit for bit."""

import numpy as np
import pytest

from vpwm import _kernels as K


@pytest.fixture(scope="module")
def cases(rng=np.random.default_rng(5)):
    out = []
    for _ in range(20):
        n = int(rng.integers(10, 2000))
        m = int(rng.integers(1, 50))
        starts = np.sort(rng.integers(0, n, m)).astype(np.int64)
        widths = rng.integers(1, 20, m).astype(np.int64)
        out.append((n, starts, starts + widths))
    return out


def test_fill_pulses_paths_agree(cases):
    for n, starts, stops in cases:
        a = K.fill_pulses_np(n, starts, stops)
        if K.HAVE_NUMBA:
            b = K.fill_pulses_nb(n, starts, stops)
            assert np.array_equal(a, b)


def test_fill_pulses_clipping():
    out = K.fill_pulses_np(10, np.array([-5, 8]), np.array([3, 20]))
    assert np.array_equal(out, [1, 1, 1, 0, 0, 0, 0, 0, 1, 1])
    if K.HAVE_NUMBA:
        assert np.array_equal(out, K.fill_pulses_nb(10, np.array([-5, 8]),
                                                    np.array([3, 20])))


def test_add_scaled_kernels_paths_agree():
    rng = np.random.default_rng(6)
    kernel = rng.normal(0, 1, 37)
    pos = np.sort(rng.integers(0, 500, 40)).astype(np.int64)
    scales = rng.choice([-1.0, 1.0], 40)
    a = np.zeros(600)
    K.add_scaled_kernels_np(a, pos, scales, kernel)
    if K.HAVE_NUMBA:
        b = np.zeros(600)
        K.add_scaled_kernels_nb(b, pos, scales, kernel)
        assert np.array_equal(a, b)
    assert np.any(a != 0)


def test_local_peaks_paths_agree():
    rng = np.random.default_rng(7)
    for _ in range(50):
        x = rng.normal(0, 1, 300)
        x[rng.integers(0, 300, 5)] = x.max() + rng.uniform(0, 2)
        thr = float(np.percentile(np.abs(x), 90))
        a = K.local_peaks_np(np.abs(x), thr)
        if K.HAVE_NUMBA:
            b = K.local_peaks_nb(np.abs(x), thr)
            assert np.array_equal(a, b)


def test_local_peaks_plateau_ties():
    x = np.array([0.0, 5.0, 5.0, 0.0, 7.0, 0.0])
    # left element of a plateau wins (strict left, non-strict right)
    assert list(K.local_peaks_np(x, 1.0)) == [1, 4]
    if K.HAVE_NUMBA:
        assert list(K.local_peaks_nb(x, 1.0)) == [1, 4]


def test_dispatcher_obeys_flag(monkeypatch):
    starts = np.array([2], dtype=np.int64)
    stops = np.array([5], dtype=np.int64)
    monkeypatch.setattr(K, "USE_NUMBA", False)
    a = K.fill_pulses(8, starts, stops)
    if K.HAVE_NUMBA:
        monkeypatch.setattr(K, "USE_NUMBA", True)
        b = K.fill_pulses(8, starts, stops)
        assert np.array_equal(a, b)


def test_env_flag_parsing(monkeypatch):
    monkeypatch.setenv("VPWM_NO_NUMBA", "1")
    assert K._env_disables_numba()
    monkeypatch.setenv("VPWM_NO_NUMBA", "")
    assert not K._env_disables_numba()
