"""Correlation receiver: sliding windows, thresholding, heartbeats, frames.

The receiver holds one +/-1 template per registered appliance. Incoming
audio is processed in overlapping windows (1.25 symbol lengths long, sliding
by 0.25); each window is correlated against each template, the correlation
noise floor is estimated per window, and peaks clearing the threshold become
heartbeat events. Heartbeats of one appliance are then grouped into frames
and their start-to-start gaps decoded back into payload bits.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.signal import butter, sosfiltfilt
from scipy.stats import norm

from ._kernels import local_peaks
from .audio import AudioBuffer
from .symbols import (DEFAULT_PROFILE, cross_correlate, generate_periods,
                      normalize_template, validate_appliance_id)
from .timecode import FrameCodec, decode_intervals, frame_gap_limit, max_interval, t_min

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegistryEntry:
    appliance_id: int
    template: AudioBuffer
    codec: FrameCodec
    heartbeat_period: float | None = None


class Registry:
    """Known appliances: ID -> (template, codec, optional heartbeat period)."""

    def __init__(self):
        self._entries: dict[int, RegistryEntry] = {}

    def add(self, appliance_id: int, template: AudioBuffer, codec: FrameCodec,
            heartbeat_period: float | None = None) -> None:
        appliance_id = validate_appliance_id(appliance_id)
        if appliance_id in self._entries:
            raise ValueError(f"appliance id {appliance_id} already registered")
        if self._entries:
            fs = next(iter(self._entries.values())).template.sample_rate
            if abs(template.sample_rate - fs) > 1e-9:
                raise ValueError("all templates must share one sample rate")
        self._entries[appliance_id] = RegistryEntry(
            appliance_id, template, codec, heartbeat_period)

    def register(self, appliance_id: int, codec: FrameCodec,
                 sample_rate: float, heartbeat_period: float | None = None,
                 profile=None) -> None:
        """Generate and register the template for an appliance ID."""
        from .symbols import DEFAULT_PROFILE
        symbol = generate_periods(appliance_id, codec.symbol_length,
                                  profile or DEFAULT_PROFILE)
        self.add(appliance_id, normalize_template(symbol, sample_rate), codec,
                 heartbeat_period)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, appliance_id: int) -> bool:
        return appliance_id in self._entries

    @property
    def ids(self) -> list[int]:
        return sorted(self._entries)

    def entry(self, appliance_id: int) -> RegistryEntry:
        return self._entries[appliance_id]

    @property
    def sample_rate(self) -> float:
        if not self._entries:
            raise ValueError("registry is empty")
        return next(iter(self._entries.values())).template.sample_rate

    @property
    def max_symbol_length(self) -> float:
        return max(e.codec.symbol_length for e in self._entries.values())


def load_registry(path, sample_rate: float | None = None) -> tuple[Registry, dict]:
    """Build a registry from a JSON description file.

    Schema: {"sample_rate": 24000, "preamble_id": null, "appliances": [
    {"id": 42, "symbol_length": 1.0, "delta": 0.02, "bits_per_interval": 3,
    "frame_symbols": 4, "heartbeat_period": null}, ...]}
    Returns the registry plus the parsed top-level mapping.
    """
    with open(path) as fh:
        spec = json.load(fh)
    fs = float(sample_rate or spec.get("sample_rate", 24000.0))
    registry = Registry()
    for app in spec["appliances"]:
        codec = FrameCodec(
            bits_per_interval=int(app.get("bits_per_interval", 3)),
            resolution=float(app.get("delta", 0.020)),
            symbol_length=float(app.get("symbol_length", 1.0)),
            symbols_per_frame=int(app.get("frame_symbols", 4)),
        )
        registry.register(int(app["id"]), codec, fs,
                          heartbeat_period=app.get("heartbeat_period"))
    return registry, spec


# ---------------------------------------------------------------------------
# events and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Heartbeat:
    """One detected symbol: the appliance is ON at this timestamp."""

    id: int
    timestamp: float
    score: float
    state: str = "ON"


@dataclass(frozen=True)
class DecodedMessage:
    id: int
    timestamp: float
    bits: tuple


@dataclass(frozen=True)
class PartialFrame:
    id: int
    timestamp: float
    count: int


@dataclass(frozen=True)
class RawDetection:
    id: int
    timestamp: float
    score: float
    peak: float = 0.0


@dataclass(frozen=True)
class DetectorConfig:
    """Receiver tuning; defaults follow the deployed configuration."""

    window_factor: float = 1.25
    slide_factor: float = 0.25
    threshold_sigmas: float = 5.0
    dedup_radius: float | None = None  # None -> half the symbol length
    noise_trim_fraction: float = 0.01
    preamble_id: int | None = None
    skip_after_detect: bool = False
    listen_duration: float | None = None
    highpass_hz: float | None = None

    def __post_init__(self):
        if not 0 < self.slide_factor <= self.window_factor:
            raise ValueError("need 0 < slide_factor <= window_factor")
        if not self.threshold_sigmas > 0:
            raise ValueError("threshold_sigmas must be positive")
        if not 0 <= self.noise_trim_fraction < 0.5:
            raise ValueError("noise_trim_fraction must be in [0, 0.5)")


# ---------------------------------------------------------------------------
# noise statistics and window detection
# ---------------------------------------------------------------------------

def noise_stats(correlation: np.ndarray, trim_fraction: float = 0.01) -> tuple[float, float]:
    """Mean and std of |correlation| with the largest values excluded.

    Trimming the top ``trim_fraction`` keeps a genuine symbol peak from
    inflating the floor estimate.
    """
    a = np.abs(np.asarray(correlation, dtype=np.float64))
    if a.size == 0:
        raise ValueError("empty correlation series")
    k = int(round(trim_fraction * a.size))
    if k > 0:
        a = np.sort(a)[:a.size - k]
    if a.size == 0:
        return 0.0, 0.0
    return float(np.mean(a)), float(np.std(a))


def _trim_correction(trim_fraction: float) -> float:
    """Second-moment deflation of |N(0,1)| when its top fraction is trimmed."""
    if trim_fraction <= 0:
        return 1.0
    q = norm.ppf(1.0 - trim_fraction / 2.0)
    return (1.0 - 2.0 * (q * norm.pdf(q) + norm.sf(q))) / (1.0 - trim_fraction)


def equivalent_sigma(mu: float, sigma: float, trim_fraction: float = 0.01) -> float:
    """Std of the underlying correlation noise, recovered from folded stats.

    For zero-mean Gaussian correlation noise the folded (absolute) series has
    mu^2 + sigma^2 equal to the raw second moment, so the raw std is
    sqrt(mu^2 + sigma^2) up to the trim deflation.
    """
    return math.sqrt((mu * mu + sigma * sigma) / _trim_correction(trim_fraction))


def detection_threshold(mu: float, sigma: float, config: DetectorConfig,
                        guard_sigma: float = 0.0) -> float:
    """Absolute-correlation threshold for the configured sigma multiple.

    The multiple is applied to the equivalent Gaussian noise std rather than
    to the folded std, which keeps the per-window false-alarm probability of
    a several-thousand-lag search below 1%. ``guard_sigma`` is the
    matched-filter floor sqrt(template_energy * window_power): on noise-like
    windows it coincides with the estimated floor, but on windows that are
    mostly digital silence it stops a sliver of signal from looking
    significant against a near-zero estimate.
    """
    return config.threshold_sigmas * max(
        equivalent_sigma(mu, sigma, config.noise_trim_fraction), guard_sigma)


class _TemplateBank:
    """Per-template FFTs cached for one window length."""

    def __init__(self, registry: Registry, window_len: int):
        self.window_len = window_len
        self.ids = registry.ids
        max_tpl = max(len(registry.entry(i).template) for i in self.ids)
        self.nfft = next_fast_len(window_len + max_tpl - 1)
        self._tpl_len = {}
        self._tpl_energy = {}
        self._tpl_fft = {}
        for i in self.ids:
            tpl = registry.entry(i).template.samples
            self._tpl_len[i] = tpl.size
            self._tpl_energy[i] = float(np.dot(tpl, tpl))
            self._tpl_fft[i] = np.conj(np.fft.rfft(tpl, self.nfft))

    def correlate(self, window: np.ndarray, appliance_id: int,
                  window_fft: np.ndarray | None = None) -> np.ndarray:
        if window_fft is None:
            window_fft = np.fft.rfft(window, self.nfft)
        full = np.fft.irfft(window_fft * self._tpl_fft[appliance_id], self.nfft)
        return full[: window.size - self._tpl_len[appliance_id] + 1]

    def window_fft(self, window: np.ndarray) -> np.ndarray:
        return np.fft.rfft(window, self.nfft)

    def template_len(self, appliance_id: int) -> int:
        return self._tpl_len[appliance_id]

    def template_energy(self, appliance_id: int) -> float:
        return self._tpl_energy[appliance_id]


def _populated_power(window: np.ndarray) -> float:
    """Mean square over the samples that actually carry signal.

    Digital silence (exact zeros from synthetic padding) would dilute the
    window power and let a sliver of symbol look significant; real
    microphone noise never produces such zeros, so this only bites in
    simulation.
    """
    peak = np.max(np.abs(window)) if window.size else 0.0
    if peak == 0.0:
        return 0.0
    mask = np.abs(window) > 1e-6 * peak
    count = int(np.count_nonzero(mask))
    if count == 0:
        return 0.0
    return float(np.sum(window ** 2) / count)


def _scan_correlation(corr: np.ndarray, config: DetectorConfig,
                      guard_sigma: float = 0.0,
                      nms_radius: int = 0) -> list[tuple[int, float, float]]:
    a = np.abs(corr)
    mu, sigma = noise_stats(a, config.noise_trim_fraction)
    if sigma <= 0.0:
        return []
    thr = detection_threshold(mu, sigma, config, guard_sigma)
    peaks = list(local_peaks(a, thr))
    # array ends count as peaks against their single neighbor, so a true
    # alignment falling exactly on a window boundary is not lost
    if a.size >= 2 and a[0] > thr and a[0] > a[1]:
        peaks.insert(0, 0)
    if a.size >= 2 and a[-1] > thr and a[-1] > a[-2]:
        peaks.append(a.size - 1)
    if nms_radius > 0 and len(peaks) > 1:
        # ripples on a strong peak's skirt are the same event: keep only the
        # largest peak within the suppression radius
        order = sorted(peaks, key=lambda p: (-a[p], p))
        kept: list[int] = []
        for p in order:
            if all(abs(p - q) > nms_radius for q in kept):
                kept.append(p)
        peaks = sorted(kept)
    return [(int(p), float((a[p] - mu) / sigma), float(a[p])) for p in peaks]


def detect_window(window: AudioBuffer, registry: Registry,
                  config: DetectorConfig = DetectorConfig()) -> list[RawDetection]:
    """Correlate one window against every registered template.

    Emits every local maximum of the absolute correlation that clears the
    threshold, as (id, timestamp, score-in-folded-sigmas), ordered by
    (id, timestamp). Templates longer than the window are skipped.
    """
    detections: list[RawDetection] = []
    bank = _TemplateBank(registry, len(window))
    wfft = bank.window_fft(window.samples)
    w_power = _populated_power(window.samples)
    for appliance_id in registry.ids:
        tpl = registry.entry(appliance_id).template
        if len(tpl) > len(window):
            logger.warning("template %d (%d samples) longer than window (%d); skipped",
                           appliance_id, len(tpl), len(window))
            continue
        corr = bank.correlate(window.samples, appliance_id, wfft)
        guard = math.sqrt(bank.template_energy(appliance_id) * w_power)
        radius = config.dedup_radius if config.dedup_radius is not None \
            else registry.entry(appliance_id).codec.symbol_length / 2.0
        nms = int(round(radius * window.sample_rate))
        for offset, score, peak in _scan_correlation(corr, config, guard, nms):
            detections.append(RawDetection(
                appliance_id, window.start_time + offset / window.sample_rate,
                score, peak))
    return sorted(detections, key=lambda d: (d.id, d.timestamp))


# ---------------------------------------------------------------------------
# streaming engine
# ---------------------------------------------------------------------------

class StreamDetector:
    """Single-writer sliding-window engine over a chunked sample stream.

    Feed contiguous chunks in timeline order; heartbeats come back once no
    later window can still merge with them (duplicate hits from overlapping
    windows keep only the best-scoring timestamp). Supports two correlation
    economies: per-appliance skip intervals after a detection, and a
    preamble gate that correlates a single template while idle.
    """

    def __init__(self, registry: Registry, config: DetectorConfig = DetectorConfig()):
        if len(registry) == 0:
            raise ValueError("registry is empty")
        self.registry = registry
        self.config = config
        self.fs = registry.sample_rate
        base = registry.max_symbol_length
        self.window_len = int(round(config.window_factor * base * self.fs))
        self.slide_len = max(1, int(round(config.slide_factor * base * self.fs)))
        max_tpl = max(len(registry.entry(i).template) for i in registry.ids)
        if self.window_len < max_tpl:
            raise ValueError("window shorter than the longest template")
        self._bank = _TemplateBank(registry, self.window_len)
        self._buffer = np.empty(0)
        self._buffer_start = 0  # absolute sample index of buffer[0]
        self._next_window = 0  # absolute sample index of the next window
        self._started = False
        self._radius = {
            i: config.dedup_radius if config.dedup_radius is not None
            else registry.entry(i).codec.symbol_length / 2.0
            for i in registry.ids}
        # partial-overlap ghosts of a strong peak can appear up to one symbol
        # length away, while real same-id symbols are at least 1.25 lengths
        # apart, so dominated detections inside this radius are sidelobes
        self._shadow_radius = {
            i: max(1.1 * registry.entry(i).codec.symbol_length, self._radius[i])
            for i in registry.ids}
        self._pending: dict[int, list[list[float]]] = {i: [] for i in registry.ids}
        self._recent: dict[int, list[tuple[float, float]]] = {i: [] for i in registry.ids}
        self._emitted: list[Heartbeat] = []
        self._skip_until: dict[int, float] = {}
        self._gate_open_until = -math.inf
        self.correlation_counts: dict[int, int] = {i: 0 for i in registry.ids}
        self._sos = None
        if config.highpass_hz:
            self._sos = butter(2, config.highpass_hz / (self.fs / 2),
                               btype="high", output="sos")
        if config.preamble_id is not None and config.preamble_id not in registry:
            raise ValueError("preamble id is not registered")
        self._listen = config.listen_duration
        if config.preamble_id is not None and self._listen is None:
            self._listen = self._default_listen_duration()

    def _default_listen_duration(self) -> float:
        spans = []
        for i in self.registry.ids:
            codec = self.registry.entry(i).codec
            spans.append((codec.symbols_per_frame - 1) * max_interval(codec)
                         + codec.symbol_length + 2.0 * t_min(codec))
        return max(spans)

    # -- feeding ------------------------------------------------------------

    def feed(self, chunk: AudioBuffer | np.ndarray) -> list[Heartbeat]:
        """Append one chunk; returns heartbeats finalized by this chunk."""
        if isinstance(chunk, AudioBuffer):
            if abs(chunk.sample_rate - self.fs) > 1e-9:
                raise ValueError("chunk sample rate differs from the registry rate")
            start_idx = int(round(chunk.start_time * self.fs))
            expected = self._buffer_start + self._buffer.size
            if self._started and start_idx != expected:
                raise ValueError(
                    f"out-of-order chunk: starts at sample {start_idx}, expected {expected}")
            if not self._started:
                self._buffer_start = start_idx
                self._next_window = start_idx
            samples = chunk.samples
        else:
            samples = np.asarray(chunk, dtype=np.float64)
        self._started = True
        self._buffer = np.concatenate([self._buffer, samples])
        return self._process()

    def flush(self) -> list[Heartbeat]:
        """Finalize every pending candidate at end of stream."""
        out = []
        for appliance_id in self.registry.ids:
            for t, score, peak in sorted(self._pending[appliance_id]):
                hb = self._finalize(appliance_id, t, score, peak)
                if hb is not None:
                    out.append(hb)
            self._pending[appliance_id] = []
        return sorted(out, key=lambda h: (h.timestamp, h.id))

    # -- internals ----------------------------------------------------------

    def _process(self) -> list[Heartbeat]:
        emitted: list[Heartbeat] = []
        while self._buffer_start + self._buffer.size >= self._next_window + self.window_len:
            w0 = self._next_window
            emitted.extend(self._finalize_before(w0 / self.fs))
            self._evaluate_window(w0)
            self._next_window = w0 + self.slide_len
            drop = self._next_window - self._buffer_start
            if drop > 0:
                self._buffer = self._buffer[drop:]
                self._buffer_start = self._next_window
        return sorted(emitted, key=lambda h: (h.timestamp, h.id))

    def _active_ids(self, window_time: float) -> list[int]:
        pre = self.config.preamble_id
        if pre is not None and window_time >= self._gate_open_until:
            return [pre]
        ids = []
        for i in self.registry.ids:
            if self.config.skip_after_detect and window_time < self._skip_until.get(i, -math.inf):
                continue
            ids.append(i)
        return ids

    def _evaluate_window(self, w0: int) -> None:
        window = self._buffer[w0 - self._buffer_start: w0 - self._buffer_start + self.window_len]
        if self._sos is not None:
            window = sosfiltfilt(self._sos, window)
        window_time = w0 / self.fs
        ids = self._active_ids(window_time)
        if not ids:
            return
        wfft = self._bank.window_fft(window)
        w_power = _populated_power(window)
        for appliance_id in ids:
            self.correlation_counts[appliance_id] += 1
            corr = self._bank.correlate(window, appliance_id, wfft)
            guard = math.sqrt(self._bank.template_energy(appliance_id) * w_power)
            nms = int(round(self._radius[appliance_id] * self.fs))
            for offset, score, peak in _scan_correlation(corr, self.config, guard, nms):
                self._merge(appliance_id, window_time + offset / self.fs, score, peak)

    def _merge(self, appliance_id: int, timestamp: float, score: float,
               peak: float) -> None:
        radius = self._radius[appliance_id]
        for cand in self._pending[appliance_id]:
            if abs(cand[0] - timestamp) <= radius:
                if score > cand[1] or (score == cand[1] and timestamp < cand[0]):
                    cand[0], cand[1] = timestamp, score
                cand[2] = max(cand[2], peak)
                return
        self._pending[appliance_id].append([timestamp, score, peak])

    def _shadowed(self, appliance_id: int, timestamp: float, peak: float) -> bool:
        radius = self._shadow_radius[appliance_id]
        for t, p in self._recent[appliance_id]:
            if abs(t - timestamp) <= radius and p >= 2.0 * peak:
                return True
        for cand in self._pending[appliance_id]:
            if abs(cand[0] - timestamp) <= radius and cand[2] >= 2.0 * peak:
                return True
        return False

    def _finalize_before(self, window_time: float) -> list[Heartbeat]:
        out = []
        for appliance_id in self.registry.ids:
            radius = self._radius[appliance_id]
            keep = []
            for t, score, peak in self._pending[appliance_id]:
                if t + radius < window_time:
                    hb = self._finalize(appliance_id, t, score, peak)
                    if hb is not None:
                        out.append(hb)
                else:
                    keep.append([t, score, peak])
            self._pending[appliance_id] = keep
        return out

    def _finalize(self, appliance_id: int, timestamp: float, score: float,
                  peak: float) -> Heartbeat | None:
        if self._shadowed(appliance_id, timestamp, peak):
            logger.debug("shadowed sidelobe for id %d at %.3fs", appliance_id, timestamp)
            return None
        recent = self._recent[appliance_id]
        recent.append((timestamp, peak))
        horizon = timestamp - 2.0 * self._shadow_radius[appliance_id]
        self._recent[appliance_id] = [(t, p) for t, p in recent if t >= horizon]
        hb = Heartbeat(appliance_id, timestamp, score)
        self._emitted.append(hb)
        entry = self.registry.entry(appliance_id)
        if self.config.skip_after_detect and entry.heartbeat_period:
            self._skip_until[appliance_id] = (
                timestamp + entry.heartbeat_period - entry.codec.symbol_length)
        if appliance_id == self.config.preamble_id:
            self._gate_open_until = timestamp + self._listen
        return hb


def stream(chunks, registry: Registry,
           config: DetectorConfig = DetectorConfig()) -> list[Heartbeat]:
    """Run a chunk iterable through a fresh engine; returns all heartbeats."""
    engine = StreamDetector(registry, config)
    events: list[Heartbeat] = []
    for chunk in chunks:
        events.extend(engine.feed(chunk))
    events.extend(engine.flush())
    return events


# ---------------------------------------------------------------------------
# frame assembly and channel estimation
# ---------------------------------------------------------------------------

def assemble_messages(heartbeats, codec: FrameCodec
                      ) -> tuple[list[DecodedMessage], list[PartialFrame]]:
    """Group one appliance's heartbeats into frames and decode the gaps.

    Runs are split wherever the gap exceeds the frame boundary, then chopped
    into complete frames of M heartbeats. Leftover heartbeats (but at least
    2) are reported as partial frames, never decoded.
    """
    hbs = sorted(heartbeats, key=lambda h: h.timestamp)
    if any(h.id != hbs[0].id for h in hbs):
        raise ValueError("assemble_messages expects heartbeats of a single id")
    limit = frame_gap_limit(codec)
    m = codec.symbols_per_frame
    messages: list[DecodedMessage] = []
    partials: list[PartialFrame] = []

    def close_run(run: list) -> None:
        while len(run) >= m:
            frame, run[:] = run[:m], run[m:]
            gaps = [b.timestamp - a.timestamp for a, b in zip(frame, frame[1:])]
            bits = decode_intervals(gaps, codec) if gaps else []
            messages.append(DecodedMessage(frame[0].id, frame[0].timestamp, tuple(bits)))
        if len(run) >= 2:
            logger.info("partial frame for id %d at %.3fs (%d heartbeats)",
                        run[0].id, run[0].timestamp, len(run))
            partials.append(PartialFrame(run[0].id, run[0].timestamp, len(run)))

    run: list = []
    for hb in hbs:
        if run and hb.timestamp - run[-1].timestamp > limit:
            close_run(run)
            run = []
        run.append(hb)
    if run:
        close_run(run)
    return messages, partials


def extract_cir(window: AudioBuffer, template: AudioBuffer,
                config: DetectorConfig = DetectorConfig(),
                span: float = 0.025) -> tuple[np.ndarray, np.ndarray]:
    """Channel impulse response around the dominant correlation peak.

    Returns (lags in seconds relative to the peak, amplitudes normalized by
    the peak value) over +/- ``span`` seconds. Empty arrays if nothing
    clears the detection threshold.
    """
    corr = cross_correlate(window, template)
    a = np.abs(corr)
    mu, sigma = noise_stats(a, config.noise_trim_fraction)
    guard = math.sqrt(float(np.dot(template.samples, template.samples)) * window.power())
    if sigma <= 0.0 or np.max(a) <= detection_threshold(mu, sigma, config, guard):
        logger.info("no correlation peak above threshold; empty CIR")
        return np.empty(0), np.empty(0)
    peak = int(np.argmax(a))
    half = int(round(span * window.sample_rate))
    lo, hi = max(0, peak - half), min(corr.size, peak + half + 1)
    lags = (np.arange(lo, hi) - peak) / window.sample_rate
    return lags, corr[lo:hi] / corr[peak]
