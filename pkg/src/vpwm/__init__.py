"""Acoustic communication for motor-driven appliances.

Appliances drive their DC motors with pulse sequences whose per-pulse
switching periods are pseudo-random but reproducible from a 16-bit ID. A
listening receiver correlates known templates against the microphone stream
to detect which appliances are running (heartbeats) and decodes payload bits
from the timing between repeated symbols.
"""

from .audio import DEFAULT_SAMPLE_RATE, AudioBuffer, read_wav, write_wav
from .channel import (ChannelModel, SpikeKernel, add_noise_at_snr, apply_doppler,
                      apply_multipath, mix_sources, propagate, render_ei)
from .detector import (DecodedMessage, DetectorConfig, Heartbeat, PartialFrame,
                       Registry, StreamDetector, assemble_messages, detect_window,
                       extract_cir, load_registry, noise_stats, stream)
from .symbols import (ApplianceId, DutyEvent, MotorProfile, Splitmix64, VpwmSymbol,
                      cross_correlate, expand_seed, generate_periods,
                      normalize_template, psd_profile, render_voltage,
                      tonal_prominence)
from .timecode import (FrameCodec, TransmissionSchedule, data_rate, decode_intervals,
                       encode_intervals, optimal_n, schedule, t_min)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "DEFAULT_SAMPLE_RATE", "read_wav", "write_wav",
    "ChannelModel", "SpikeKernel", "add_noise_at_snr", "apply_doppler",
    "apply_multipath", "mix_sources", "propagate", "render_ei",
    "DecodedMessage", "DetectorConfig", "Heartbeat", "PartialFrame", "Registry",
    "StreamDetector", "assemble_messages", "detect_window", "extract_cir",
    "load_registry", "noise_stats", "stream",
    "ApplianceId", "DutyEvent", "MotorProfile", "Splitmix64", "VpwmSymbol",
    "cross_correlate", "expand_seed", "generate_periods", "normalize_template",
    "psd_profile", "render_voltage", "tonal_prominence",
    "FrameCodec", "TransmissionSchedule", "data_rate", "decode_intervals",
    "encode_intervals", "optimal_n", "schedule", "t_min",
]
