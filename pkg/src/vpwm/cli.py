"""Command-line front end: synthesize, transmit, receive, benchmark, rate.

Subcommands:
  gen    render one appliance's symbol to a WAV file
  tx     encode payload bits into a timed frame of symbols and emit the WAV
  rx     detect heartbeats / decode messages from a WAV file or raw stdin
  bench  run a named experiment suite and write CSV (optionally JSON) reports
  rate   tabulate achievable data rates for codec parameter choices
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench as bench_mod
from .audio import AudioBuffer, read_wav, write_wav
from .channel import SpikeKernel, add_noise_at_snr, mix_sources, render_ei
from .detector import (DetectorConfig, assemble_messages, load_registry, stream)
from .symbols import (DEFAULT_PROFILE, generate_periods, normalize_template,
                      render_voltage)
from .timecode import (FrameCodec, as_bits, bits_to_hex, data_rate, hex_to_bits,
                       optimal_n, schedule, t_min)


def _add_codec_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--symbol-length", type=float, default=1.0,
                   help="requested symbol duration in seconds (default 1.0)")
    p.add_argument("--delta", type=float, default=0.020,
                   help="interval time resolution in seconds (default 0.02)")
    p.add_argument("--bits-per-interval", type=int, default=None,
                   help="bits per interval; default picks the rate-optimal value")
    p.add_argument("--frame-symbols", type=int, default=4,
                   help="symbols per frame (default 4)")


def _codec_from_args(args) -> FrameCodec:
    n = args.bits_per_interval
    if n is None:
        n = optimal_n(args.symbol_length, args.delta, args.frame_symbols)
    return FrameCodec(bits_per_interval=n, resolution=args.delta,
                      symbol_length=args.symbol_length,
                      symbols_per_frame=args.frame_symbols)


def cmd_gen(args) -> int:
    symbol = generate_periods(args.id, args.symbol_length, DEFAULT_PROFILE,
                              duty_cycle=args.duty)
    if args.mode == "template":
        buf = normalize_template(symbol, args.sample_rate)
    elif args.mode == "voltage":
        buf = render_voltage(symbol, (), args.sample_rate)
    else:
        kernel = SpikeKernel(mode=args.mode)
        buf = render_ei(render_voltage(symbol, (), args.sample_rate), kernel)
    write_wav(args.out, buf, encoding=args.encoding)
    print(f"wrote {args.out}: id={args.id} length={symbol.length:.6f}s "
          f"pulses={symbol.pulse_count} mode={args.mode}")
    return 0


def cmd_tx(args) -> int:
    codec = _codec_from_args(args)
    bits = args.bits
    if bits.startswith("0x"):
        bits = hex_to_bits(bits[2:], codec.payload_bits)
    bits = as_bits(bits)
    fs = args.sample_rate
    symbol = generate_periods(args.id, codec.symbol_length, DEFAULT_PROFILE,
                              duty_cycle=args.duty)
    wave = render_ei(render_voltage(symbol, (), fs), SpikeKernel(mode=args.ei_mode))
    t0 = args.lead
    buffers = []
    if args.preamble_id is not None:
        pre_symbol = generate_periods(args.preamble_id, codec.symbol_length,
                                      DEFAULT_PROFILE)
        pre = render_ei(render_voltage(pre_symbol, (), fs),
                        SpikeKernel(mode=args.ei_mode))
        buffers.append(AudioBuffer(pre.samples, fs, t0))
        t0 += t_min(codec)
    times = schedule(symbol, bits, codec, t0).start_times
    for t in times:
        buffers.append(AudioBuffer(wave.samples, fs, t))
    timeline = mix_sources(buffers)
    pad = np.zeros(int(round(2.0 * codec.symbol_length * fs)))
    timeline = AudioBuffer(
        np.concatenate([np.zeros(int(round(timeline.start_time * fs))),
                        timeline.samples, pad]), fs)
    if args.snr_db is not None:
        timeline = add_noise_at_snr(timeline, args.snr_db, args.seed,
                                    ref_power=wave.power())
    write_wav(args.out, timeline, encoding=args.encoding)
    print(f"wrote {args.out}: id={args.id} bits={bits_to_hex(bits)} "
          f"symbols={len(times)} duration={timeline.duration:.3f}s")
    return 0


def _read_stdin_stream(sample_rate: float) -> AudioBuffer:
    raw = sys.stdin.buffer.read()
    samples = np.frombuffer(raw, dtype=np.float32).astype(np.float64)
    return AudioBuffer(samples, sample_rate)


def cmd_rx(args) -> int:
    registry, spec = load_registry(args.registry, args.sample_rate)
    fs = registry.sample_rate
    if args.input == "-":
        audio = _read_stdin_stream(fs)
    else:
        audio = read_wav(args.input, target_rate=fs)
    config = DetectorConfig(
        preamble_id=spec.get("preamble_id") if args.gate else None,
        skip_after_detect=args.skip_after_detect,
        highpass_hz=args.highpass_hz,
    )
    heartbeats = stream([audio], registry, config)
    events = []
    for hb in heartbeats:
        events.append((hb.timestamp, 0, f"HB,{hb.id},{hb.timestamp:.6f},{hb.score:.2f}"))
    preamble_id = spec.get("preamble_id")
    for appliance_id in registry.ids:
        if appliance_id == preamble_id:
            continue
        mine = [h for h in heartbeats if h.id == appliance_id]
        codec = registry.entry(appliance_id).codec
        messages, partials = assemble_messages(mine, codec)
        for msg in messages:
            events.append((msg.timestamp, 1,
                           f"MSG,{msg.id},{msg.timestamp:.6f},{bits_to_hex(msg.bits)}"))
        for part in partials:
            events.append((part.timestamp, 1,
                           f"PART,{part.id},{part.timestamp:.6f},{part.count}"))
    for _, _, line in sorted(events):
        print(line)
    return 0


def cmd_bench(args) -> int:
    grid = {}
    if args.snr_db is not None:
        grid["snr_db"] = args.snr_db
    if args.jitter_ms is not None:
        grid["jitter_ms"] = args.jitter_ms
    if not args.no_smoke:
        smoke = bench_mod.run_loopback_smoke(bench_mod.ExperimentSpec(
            "loopback-smoke", {}, trials=2, seed=args.seed,
            sample_rate=args.sample_rate))
        errors = sum(smoke.values("bit_errors"))
        if errors:
            print(f"loopback smoke gate FAILED with {errors} bit errors", file=sys.stderr)
            return 1
        print("loopback smoke gate passed")
    names = sorted(set(bench_mod.EXPERIMENTS) - {"loopback-smoke"}) \
        if args.experiment == "all" else [args.experiment]
    for name in names:
        spec = bench_mod.ExperimentSpec(name, grid, trials=args.trials,
                                        seed=args.seed, sample_rate=args.sample_rate)
        report = bench_mod.run_experiment(spec)
        csv_text = report.to_csv()
        if args.out:
            path = args.out if len(names) == 1 else \
                args.out.replace(".csv", f"-{name}.csv")
            with open(path, "w") as fh:
                fh.write(csv_text)
            print(f"wrote {path}")
            if args.json:
                jpath = path.rsplit(".", 1)[0] + ".json"
                with open(jpath, "w") as fh:
                    fh.write(report.to_json())
                print(f"wrote {jpath}")
        else:
            sys.stdout.write(csv_text)
    return 0


def cmd_rate(args) -> int:
    print("symbol_length_s,delta_s,frame_symbols,bits_per_interval,t_min_s,rate_bps")
    if args.bits_per_interval is not None:
        n_values = [args.bits_per_interval]
    else:
        n_values = list(range(1, args.n_max + 1))
    best = None
    for n in n_values:
        codec = FrameCodec(bits_per_interval=n, resolution=args.delta,
                           symbol_length=args.symbol_length,
                           symbols_per_frame=args.frame_symbols)
        rate = data_rate(codec)
        if best is None or rate > best[1] + 1e-12:
            best = (n, rate)
        print(f"{args.symbol_length:g},{args.delta:g},{args.frame_symbols},"
              f"{n},{t_min(codec):.6f},{rate:.4f}")
    if len(n_values) > 1:
        print(f"# optimal: N={best[0]} rate={best[1]:.4f} bps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpwm",
        description="Motor-sound acoustic communication: V-PWM symbols, "
                    "interval-coded bits, correlation receiver.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render one symbol to WAV")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--symbol-length", type=float, default=1.0)
    p.add_argument("--duty", type=float, default=0.5)
    p.add_argument("--mode", choices=("template", "voltage", "filtered-square",
                                      "edge-impulse"), default="template")
    p.add_argument("--sample-rate", type=float, default=24000.0)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("tx", help="encode bits into a frame WAV")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--bits", required=True,
                   help="payload as a 01-string or 0x-prefixed hex")
    _add_codec_args(p)
    p.add_argument("--duty", type=float, default=0.5)
    p.add_argument("--ei-mode", choices=("filtered-square", "edge-impulse"),
                   default="filtered-square")
    p.add_argument("--preamble-id", type=int, default=None)
    p.add_argument("--snr-db", type=float, default=None,
                   help="add white noise at this SNR (omit for clean output)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lead", type=float, default=0.5,
                   help="silence before the first symbol, seconds")
    p.add_argument("--sample-rate", type=float, default=24000.0)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tx)

    p = sub.add_parser("rx", help="detect and decode from WAV or stdin")
    p.add_argument("--registry", required=True,
                   help="JSON registry of known appliances")
    p.add_argument("--input", required=True,
                   help="WAV path, or '-' for raw float32 samples on stdin")
    p.add_argument("--sample-rate", type=float, default=None,
                   help="override the registry sample rate")
    p.add_argument("--gate", action="store_true",
                   help="enable the preamble gate from the registry file")
    p.add_argument("--skip-after-detect", action="store_true")
    p.add_argument("--highpass-hz", type=float, default=None)
    p.set_defaults(func=cmd_rx)

    p = sub.add_parser("bench", help="run an experiment suite")
    p.add_argument("experiment", choices=sorted(bench_mod.EXPERIMENTS) + ["all"])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=float, default=24000.0)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--jitter-ms", type=float, default=None)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--json", action="store_true", help="also write a JSON mirror")
    p.add_argument("--no-smoke", action="store_true",
                   help="skip the loopback smoke gate")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rate", help="tabulate achievable data rates")
    p.add_argument("--symbol-length", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.020)
    p.add_argument("--frame-symbols", type=int, default=4)
    p.add_argument("--bits-per-interval", type=int, default=None,
                   help="fix N; default sweeps 1..n-max")
    p.add_argument("--n-max", type=int, default=8)
    p.set_defaults(func=cmd_rate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
