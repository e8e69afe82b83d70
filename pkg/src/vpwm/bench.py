"""Desk-scale experiment harness around the full transmit/receive stack.

Each experiment sweeps a parameter grid, runs seeded Monte Carlo trials of
the complete pipeline (symbol synthesis -> acoustic rendering -> channel ->
stream detection -> frame decoding), and reports metrics as deterministic
CSV/JSON tables. Identical specs (including the seed) reproduce the report
byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import fill_pulses
from .audio import AudioBuffer
from .channel import (SpikeKernel, add_noise_at_snr, apply_doppler,
                      apply_multipath, mix_sources, render_ei)
from .detector import DetectorConfig, Registry, assemble_messages, stream
from .symbols import (DEFAULT_PROFILE, VpwmSymbol, cross_correlate, generate_periods,
                      normalize_template, psd_profile, render_voltage, tonal_prominence)
from .timecode import FrameCodec, data_rate, optimal_n, schedule

DEFAULT_SNR_GRID = (20.0, 10.0, 0.0, -5.0, -10.0, -15.0)
DEFAULT_LENGTH_GRID = (0.0625, 0.125, 0.25, 0.5, 1.0, 2.0)
DEFAULT_DELTA_GRID = (0.0025, 0.005, 0.010, 0.020, 0.040)
DEFAULT_SPEED_GRID = (0.0, 0.2, 1.0, 2.0)
DEFAULT_DUTY_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_CONCURRENT_IDS = (3, 6, 8)

#: Named multipath scenarios (delay s, linear gain). "moderate" and "nlos"
#: include near-equal taps separated by more than half the default time
#: resolution, so path switching can corrupt intervals under noise.
CIR_SCENARIOS = {
    "clean": ((0.0, 1.0),),
    "moderate": ((0.0, 1.0), (0.012, 0.95)),
    "nlos": ((0.0, 0.45), (0.011, 1.0), (0.024, 0.95)),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: a named experiment, its parameter grid, trials, seed."""

    name: str
    grid: dict = field(default_factory=dict)
    trials: int = 20
    seed: int = 0
    sample_rate: float = 24000.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class ReportRow:
    params: dict
    metric: str
    value: float
    ci: float = 0.0


@dataclass
class Report:
    experiment: str
    rows: list = field(default_factory=list)

    def add(self, params: dict, metric: str, value: float, ci: float = 0.0) -> None:
        self.rows.append(ReportRow(dict(params), metric, float(value), float(ci)))

    def values(self, metric: str, **filters) -> list[float]:
        out = []
        for row in self.rows:
            if row.metric != metric:
                continue
            if all(row.params.get(k) == v for k, v in filters.items()):
                out.append(row.value)
        return out

    def value(self, metric: str, **filters) -> float:
        vals = self.values(metric, **filters)
        if len(vals) != 1:
            raise KeyError(f"{metric} with {filters} matched {len(vals)} rows")
        return vals[0]

    def _param_keys(self) -> list[str]:
        keys: list[str] = []
        for row in self.rows:
            for k in row.params:
                if k not in keys:
                    keys.append(k)
        return keys

    def to_csv(self) -> str:
        keys = self._param_keys()
        lines = [",".join(["experiment"] + keys + ["metric", "value", "ci"])]
        for row in self.rows:
            cells = [self.experiment]
            cells += [_fmt(row.params.get(k, "")) for k in keys]
            cells += [row.metric, _fmt(row.value), _fmt(row.ci)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "experiment": self.experiment,
            "rows": [
                {"params": row.params, "metric": row.metric,
                 "value": row.value, "ci": row.ci}
                for row in self.rows
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _proportion_ci(p: float, n: int) -> float:
    if n <= 0:
        return 0.0
    return 1.96 * np.sqrt(max(p * (1.0 - p), 0.0) / n)


def _trial_seed(spec: ExperimentSpec, *indices: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=spec.seed, spawn_key=tuple(indices))


# ---------------------------------------------------------------------------
# pipeline helpers
# ---------------------------------------------------------------------------

@dataclass
class _CellSetup:
    """Everything reusable across trials of one grid cell."""

    codec: FrameCodec
    symbol: VpwmSymbol
    wave: AudioBuffer
    registry: Registry
    config: DetectorConfig


def _make_cell(appliance_id: int, codec: FrameCodec, fs: float,
               ei_mode: str = "filtered-square", duty: float = 0.5) -> _CellSetup:
    symbol = generate_periods(appliance_id, codec.symbol_length, DEFAULT_PROFILE,
                              duty_cycle=duty)
    wave = render_ei(render_voltage(symbol, (), fs), SpikeKernel(mode=ei_mode))
    registry = Registry()
    registry.add(appliance_id, normalize_template(symbol, fs), codec)
    return _CellSetup(codec, symbol, wave, registry, DetectorConfig())


def _place_copies(wave: AudioBuffer, times, fs: float, tail: float) -> AudioBuffer:
    n_total = int(round((max(times) + tail) * fs)) + len(wave)
    out = np.zeros(n_total)
    for t in times:
        i0 = int(round(t * fs))
        out[i0:i0 + len(wave)] += wave.samples
    return AudioBuffer(out, fs)


def _frame_timeline(cell: _CellSetup, bits, fs: float,
                    jitter: np.ndarray | None = None, t0: float | None = None
                    ) -> tuple[AudioBuffer, list[float]]:
    lead = t0 if t0 is not None else 0.5 * cell.codec.symbol_length
    times = list(schedule(cell.symbol, bits, cell.codec, lead).start_times)
    if jitter is not None:
        times = [max(0.0, t + j) for t, j in zip(times, jitter)]
    tail = 2.0 * cell.codec.symbol_length
    return _place_copies(cell.wave, times, fs, tail), times


def _match_events(heartbeats, true_times, tol: float) -> tuple[int, int]:
    """Greedy matching of heartbeats to ground-truth starts; returns (tp, fa)."""
    unmatched = list(true_times)
    tp = 0
    fa = 0
    for hb in sorted(heartbeats, key=lambda h: h.timestamp):
        best = None
        for i, t in enumerate(unmatched):
            err = abs(hb.timestamp - t)
            if err <= tol and (best is None or err < best[1]):
                best = (i, err)
        if best is None:
            fa += 1
        else:
            unmatched.pop(best[0])
            tp += 1
    return tp, fa


def _trial_accuracy(tp: int, fa: int, total: int) -> float:
    """True positives over transmitted symbols; any false alarm zeroes the trial."""
    if fa > 0:
        return 0.0
    return tp / total if total else 0.0


def _bit_errors(sent: list[int], messages) -> int:
    got: list[int] = []
    for msg in messages:
        got.extend(msg.bits)
    errors = sum(1 for a, b in zip(sent, got) if a != b)
    errors += abs(len(sent) - len(got))
    return min(errors, len(sent))


def _run_frame_trials(spec: ExperimentSpec, cell: _CellSetup, cell_idx: int,
                      snr_db: float, tol: float,
                      jitter_sigma: float = 0.0,
                      taps=None, speed: float = 0.0
                      ) -> tuple[float, float, int, int]:
    """Transmit `trials` frames through the channel; aggregate accuracy and BER."""
    fs = spec.sample_rate
    m = cell.codec.symbols_per_frame
    acc_sum = 0.0
    bit_errors = 0
    bits_sent = 0
    for trial in range(spec.trials):
        rng = np.random.default_rng(_trial_seed(spec, cell_idx, trial))
        bits = list(rng.integers(0, 2, cell.codec.payload_bits))
        jitter = rng.normal(0.0, jitter_sigma, m) if jitter_sigma > 0 else None
        timeline, times = _frame_timeline(cell, bits, fs, jitter)
        if speed != 0.0:
            timeline = apply_doppler(timeline, speed)
        if taps is not None:
            timeline = apply_multipath(timeline, taps)
        if not np.isinf(snr_db):
            timeline = add_noise_at_snr(timeline, snr_db, rng,
                                        ref_power=cell.wave.power())
        hbs = stream([timeline], cell.registry, cell.config)
        tp, fa = _match_events(hbs, times, tol)
        acc_sum += _trial_accuracy(tp, fa, m)
        messages, _ = assemble_messages(hbs, cell.codec)
        bit_errors += _bit_errors(bits, messages)
        bits_sent += len(bits)
    return acc_sum / spec.trials, bit_errors / max(bits_sent, 1), bit_errors, bits_sent


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_ber_vs_symbol_length(spec: ExperimentSpec) -> Report:
    """BER and Eq-style throughput per symbol length at a fixed SNR."""
    fs = spec.sample_rate
    lengths = spec.grid.get("symbol_lengths", DEFAULT_LENGTH_GRID)
    snr_db = spec.grid.get("snr_db", 0.0)
    delta = spec.grid.get("delta", 0.020)
    m = spec.grid.get("frame_symbols", 4)
    report = Report("ber_vs_symbol_length")
    for ci_idx, length in enumerate(lengths):
        n = optimal_n(length, delta, m)
        codec = FrameCodec(bits_per_interval=n, resolution=delta,
                           symbol_length=length, symbols_per_frame=m)
        cell = _make_cell(spec.grid.get("appliance_id", 21), codec, fs)
        acc, ber, errs, sent = _run_frame_trials(
            spec, cell, ci_idx, snr_db, tol=delta / 2)
        params = {"symbol_length": length, "snr_db": snr_db, "delta": delta,
                  "bits_per_interval": n}
        report.add(params, "throughput_bps", data_rate(codec))
        report.add(params, "detection_accuracy", acc, _proportion_ci(acc, spec.trials))
        report.add(params, "ber", ber, _proportion_ci(ber, max(sent, 1)))
    return report


def run_ber_vs_resolution(spec: ExperimentSpec) -> Report:
    """BER per time resolution at 1 s symbols, with Gaussian timing jitter."""
    fs = spec.sample_rate
    deltas = spec.grid.get("deltas", DEFAULT_DELTA_GRID)
    length = spec.grid.get("symbol_length", 1.0)
    snr_db = spec.grid.get("snr_db", float("inf"))
    jitter = spec.grid.get("jitter_ms", 3.0) / 1000.0
    m = spec.grid.get("frame_symbols", 4)
    report = Report("ber_vs_resolution")
    for ci_idx, delta in enumerate(deltas):
        n = optimal_n(length, delta, m)
        codec = FrameCodec(bits_per_interval=n, resolution=delta,
                           symbol_length=length, symbols_per_frame=m)
        cell = _make_cell(spec.grid.get("appliance_id", 21), codec, fs)
        acc, ber, errs, sent = _run_frame_trials(
            spec, cell, ci_idx, snr_db, tol=max(delta, 4 * jitter),
            jitter_sigma=jitter)
        params = {"delta": delta, "jitter_ms": jitter * 1000.0,
                  "bits_per_interval": n}
        report.add(params, "throughput_bps", data_rate(codec))
        report.add(params, "ber", ber, _proportion_ci(ber, max(sent, 1)))
        report.add(params, "detection_accuracy", acc, _proportion_ci(acc, spec.trials))
    return report


def run_detection_vs_snr(spec: ExperimentSpec) -> Report:
    """Heartbeat detection accuracy over an SNR x symbol-length grid."""
    fs = spec.sample_rate
    snrs = spec.grid.get("snrs_db", DEFAULT_SNR_GRID)
    lengths = spec.grid.get("symbol_lengths", (0.25, 0.5, 1.0, 2.0))
    report = Report("detection_vs_snr")
    cell_idx = 0
    for snr_db in snrs:
        for length in lengths:
            codec = FrameCodec(symbol_length=length)
            cell = _make_cell(spec.grid.get("appliance_id", 21), codec, fs)
            acc_sum = 0.0
            for trial in range(spec.trials):
                rng = np.random.default_rng(_trial_seed(spec, cell_idx, trial))
                offset = 0.3 * length + rng.uniform(0.0, 0.5 * length)
                timeline = _place_copies(cell.wave, [offset], fs, 0.75 * length)
                timeline = add_noise_at_snr(timeline, snr_db, rng,
                                            ref_power=cell.wave.power())
                hbs = stream([timeline], cell.registry, cell.config)
                tp, fa = _match_events(hbs, [offset], tol=0.010)
                acc_sum += _trial_accuracy(tp, fa, 1)
            acc = acc_sum / spec.trials
            report.add({"snr_db": snr_db, "symbol_length": length},
                       "detection_accuracy", acc, _proportion_ci(acc, spec.trials))
            cell_idx += 1
    return report


def run_concurrency(spec: ExperimentSpec) -> Report:
    """Per-appliance accuracy and BER when several IDs transmit at once."""
    fs = spec.sample_rate
    ids = tuple(spec.grid.get("appliance_ids", DEFAULT_CONCURRENT_IDS))
    if len(ids) < 1:
        raise ValueError("concurrency needs at least one appliance id")
    snr_db = spec.grid.get("snr_db", -5.0)
    codec = FrameCodec(symbol_length=spec.grid.get("symbol_length", 1.0))
    cells = {i: _make_cell(i, codec, fs) for i in ids}
    registry = Registry()
    for i in ids:
        registry.add(i, cells[i].registry.entry(i).template, codec)
    config = DetectorConfig()
    report = Report("concurrency")
    m = codec.symbols_per_frame
    acc = {i: 0.0 for i in ids}
    errs = {i: 0 for i in ids}
    sent_count = {i: 0 for i in ids}
    for trial in range(spec.trials):
        rng = np.random.default_rng(_trial_seed(spec, 0, trial))
        sent_bits = {}
        truths = {}
        buffers = []
        for i in ids:
            bits = list(rng.integers(0, 2, codec.payload_bits))
            sent_bits[i] = bits
            t0 = 0.5 + rng.uniform(0.0, 2.0)
            timeline, times = _frame_timeline(cells[i], bits, fs, t0=t0)
            truths[i] = times
            buffers.append(timeline)
        mixed = mix_sources(buffers)
        ref = float(np.mean([cells[i].wave.power() for i in ids]))
        mixed = add_noise_at_snr(mixed, snr_db, rng, ref_power=ref)
        hbs = stream([mixed], registry, config)
        for i in ids:
            mine = [h for h in hbs if h.id == i]
            tp, fa = _match_events(mine, truths[i], tol=0.010)
            acc[i] += _trial_accuracy(tp, fa, m)
            messages, _ = assemble_messages(mine, codec)
            errs[i] += _bit_errors(sent_bits[i], messages)
            sent_count[i] += len(sent_bits[i])
    for i in ids:
        a = acc[i] / spec.trials
        b = errs[i] / max(sent_count[i], 1)
        report.add({"appliance_id": i, "snr_db": snr_db, "concurrent": len(ids)},
                   "detection_accuracy", a, _proportion_ci(a, spec.trials))
        report.add({"appliance_id": i, "snr_db": snr_db, "concurrent": len(ids)},
                   "ber", b, _proportion_ci(b, max(sent_count[i], 1)))
    # orthogonality spot check: one id's frames against another id's template
    if len(ids) >= 2:
        rng = np.random.default_rng(_trial_seed(spec, 1, 0))
        bits = list(rng.integers(0, 2, codec.payload_bits))
        timeline, _ = _frame_timeline(cells[ids[0]], bits, fs)
        other = Registry()
        other.add(ids[1], cells[ids[1]].registry.entry(ids[1]).template, codec)
        cross = stream([timeline], other, config)
        report.add({"tx_id": ids[0], "rx_id": ids[1], "snr_db": float("inf"),
                    "concurrent": 1}, "cross_hits", float(len(cross)))
    return report


def run_duty_mismatch(spec: ExperimentSpec) -> Report:
    """Detection with a 50% template while the transmitter runs other duties."""
    fs = spec.sample_rate
    duties = spec.grid.get("duty_cycles", DEFAULT_DUTY_GRID)
    snr_db = spec.grid.get("snr_db", 0.0)
    codec = FrameCodec(symbol_length=spec.grid.get("symbol_length", 1.0))
    appliance_id = spec.grid.get("appliance_id", 21)
    report = Report("duty_mismatch")
    for ci_idx, duty in enumerate(duties):
        cell = _make_cell(appliance_id, codec, fs, duty=duty)
        # aligned +/-1 correlation against the 50% template, noise-free
        tx = render_voltage(cell.symbol, (), fs)
        tx_pm = tx.with_samples(2.0 * tx.samples - 1.0)
        tpl = cell.registry.entry(appliance_id).template
        corr = float(np.dot(tx_pm.samples, tpl.samples)) / len(tpl)
        params = {"duty_cycle": duty, "snr_db": snr_db}
        report.add(params, "aligned_correlation", corr)
        report.add(params, "correlation_law", 1.0 - 2.0 * abs(duty - 0.5))
        acc, ber, _, _ = _run_frame_trials(spec, cell, ci_idx, snr_db, tol=0.010)
        report.add(params, "detection_accuracy", acc, _proportion_ci(acc, spec.trials))
        report.add(params, "ber", ber)
    return report


def run_mobility(spec: ExperimentSpec) -> Report:
    """Impact of constant radial motion (Doppler) on detection and BER."""
    fs = spec.sample_rate
    speeds = spec.grid.get("speeds", DEFAULT_SPEED_GRID)
    snr_db = spec.grid.get("snr_db", -12.0)
    codec = FrameCodec(symbol_length=spec.grid.get("symbol_length", 1.0))
    cell = _make_cell(spec.grid.get("appliance_id", 21), codec, fs)
    tpl = cell.registry.entry(cell.symbol.id).template
    clean_peak = float(np.max(np.abs(cross_correlate(
        _place_copies(cell.wave, [0.2], fs, 0.2), tpl))))
    report = Report("mobility")
    for ci_idx, speed in enumerate(speeds):
        shifted = apply_doppler(_place_copies(cell.wave, [0.2], fs, 0.2), speed)
        peak = float(np.max(np.abs(cross_correlate(shifted, tpl))))
        params = {"speed_mps": speed, "snr_db": snr_db}
        report.add(params, "peak_ratio", peak / clean_peak)
        acc, ber, _, _ = _run_frame_trials(spec, cell, ci_idx, snr_db,
                                           tol=0.020, speed=speed)
        report.add(params, "detection_accuracy", acc, _proportion_ci(acc, spec.trials))
        report.add(params, "ber", ber)
    return report


def run_multipath(spec: ExperimentSpec) -> Report:
    """Detection and BER across named channel-impulse-response scenarios."""
    fs = spec.sample_rate
    scenarios = spec.grid.get("cir_scenarios", CIR_SCENARIOS)
    snr_db = spec.grid.get("snr_db", -10.0)
    codec = FrameCodec(symbol_length=spec.grid.get("symbol_length", 1.0))
    cell = _make_cell(spec.grid.get("appliance_id", 21), codec, fs)
    report = Report("multipath")
    for ci_idx, (name, taps) in enumerate(scenarios.items()):
        max_delay = max(d for d, _ in taps)
        acc, ber, _, _ = _run_frame_trials(
            spec, cell, ci_idx, snr_db, tol=max_delay + 0.010, taps=taps)
        params = {"scenario": name, "snr_db": snr_db}
        report.add(params, "detection_accuracy", acc, _proportion_ci(acc, spec.trials))
        report.add(params, "ber", ber)
    return report


def _stepped_chirp(duration: float, fs: float, f_lo: float = 500.0,
                   f_hi: float = 2000.0, step_time: float = 0.050,
                   n_steps: int = 16) -> AudioBuffer:
    """Square wave whose switching frequency steps up every ``step_time``."""
    freqs = np.linspace(f_lo, f_hi, n_steps)
    n = int(round(duration * fs))
    out = np.empty(n)
    step_n = int(round(step_time * fs))
    for k in range(0, n, step_n):
        f = freqs[(k // step_n) % n_steps]
        t = np.arange(k, min(k + step_n, n)) / fs
        out[k:k + step_n] = np.where((t * f) % 1.0 < 0.5, 1.0, -1.0)
    return AudioBuffer(out, fs)


def _fixed_pwm(duration: float, fs: float, period: float = 0.00125) -> AudioBuffer:
    n = int(round(duration * fs))
    edges_on = np.round(np.arange(0.0, duration, period) * fs).astype(np.int64)
    edges_off = np.round((np.arange(0.0, duration, period) + 0.5 * period) * fs).astype(np.int64)
    return AudioBuffer(2.0 * fill_pulses(n, edges_on, edges_off) - 1.0, fs)


def run_comfort_psd(spec: ExperimentSpec) -> Report:
    """Tonal prominence of the pulse modulations a listener would hear.

    Compares the pseudo-random-period modulation against classic fixed-period
    PWM and a stepped-chirp reference at matched duty and mean switching
    frequency.
    """
    fs = spec.sample_rate
    duration = spec.grid.get("duration", 5.0)
    segment = spec.grid.get("segment", 0.5)
    appliance_id = spec.grid.get("appliance_id", 21)
    symbol = generate_periods(appliance_id, duration, DEFAULT_PROFILE)
    vpwm = normalize_template(symbol, fs)
    fixed = _fixed_pwm(duration, fs)
    chirp = _stepped_chirp(duration, fs)
    report = Report("comfort_psd")
    proms = {}
    for name, wave in (("v-pwm", vpwm), ("fixed-pwm", fixed), ("chirp", chirp)):
        _, psd = psd_profile(wave, segment)
        proms[name] = tonal_prominence(psd)
        report.add({"modulation": name}, "tonal_prominence_db", proms[name])
    report.add({"modulation": "v-pwm"}, "prominence_margin_db",
               proms["fixed-pwm"] - proms["v-pwm"])
    # dominant-frequency drift of the chirp across its step segments
    step = spec.grid.get("step_time", 0.050)
    seg_n = int(round(step * fs))
    peaks = []
    for k in range(0, len(chirp) - seg_n + 1, seg_n):
        seg = chirp.samples[k:k + seg_n]
        spec_mag = np.abs(np.fft.rfft(seg * np.hanning(seg_n)))
        freqs = np.fft.rfftfreq(seg_n, 1.0 / fs)
        peaks.append(freqs[int(np.argmax(spec_mag))])
    k = np.arange(16)
    slope = float(np.polyfit(k * step, peaks[:16], 1)[0])
    report.add({"modulation": "chirp"}, "peak_drift_hz_per_s", slope)
    return report


def run_loopback_smoke(spec: ExperimentSpec) -> Report:
    """Noise-free identity-channel gate: the pipeline must be lossless."""
    fs = spec.sample_rate
    report = Report("loopback_smoke")
    for ci_idx, length in enumerate(spec.grid.get("symbol_lengths", (0.25, 1.0))):
        n = optimal_n(length, 0.020, 4)
        codec = FrameCodec(bits_per_interval=n, symbol_length=length)
        cell = _make_cell(spec.grid.get("appliance_id", 21), codec, fs)
        smoke_spec = ExperimentSpec(spec.name, spec.grid, trials=min(spec.trials, 3),
                                    seed=spec.seed, sample_rate=fs)
        acc, ber, errs, sent = _run_frame_trials(
            smoke_spec, cell, ci_idx, float("inf"), tol=0.010)
        report.add({"symbol_length": length}, "bit_errors", errs)
        report.add({"symbol_length": length}, "detection_accuracy", acc)
    return report


EXPERIMENTS = {
    "ber-vs-symbol-length": run_ber_vs_symbol_length,
    "ber-vs-resolution": run_ber_vs_resolution,
    "detection-vs-snr": run_detection_vs_snr,
    "concurrency": run_concurrency,
    "duty-mismatch": run_duty_mismatch,
    "mobility": run_mobility,
    "multipath": run_multipath,
    "comfort-psd": run_comfort_psd,
    "loopback-smoke": run_loopback_smoke,
}


def run_experiment(spec: ExperimentSpec) -> Report:
    try:
        fn = EXPERIMENTS[spec.name]
    except KeyError:
        raise ValueError(f"unknown experiment {spec.name!r}; "
                         f"choose from {sorted(EXPERIMENTS)}") from None
    return fn(spec)
