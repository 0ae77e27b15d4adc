"""Forward simulation of the IF frame series for a vibrating target.

Each reflector at distance d contributes a complex analytic beat tone

    A * exp(j * (2*pi*f0*n/adc_rate + phi)),   f0 = 2*S*d/c,  phi = 4*pi*d/lambda

summed over the chirp samples n. The target's distance is modulated by
the drive audio (one displacement value per frame); clutter is static.
Noise, slow phase drift on the target term, and frame-start power
spikes are added on top so the extraction pipeline has something real
to correct.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core_types import (
    SPEED_OF_LIGHT,
    AudioBuffer,
    IfFrameSeries,
    RadarConfig,
    Scene,
    validate_scene,
    wavelength,
)
from .errors import CorruptHeader, OutOfRange, RateMismatch


@dataclass(frozen=True, eq=False)
class SimArtifacts:
    """Simulator output plus the ground truth needed for verification."""

    if_frames: IfFrameSeries
    true_phase: np.ndarray  # radians, per frame, target term only
    true_bin: int           # range-FFT bin of the target


def distance_to_beat_freq(d: float, config: RadarConfig) -> float:
    """Beat frequency 2*S*d/c of a reflector at distance d."""
    if not (0.0 <= d < config.max_range):
        raise OutOfRange(f"distance {d} m not in [0, {config.max_range:.3f}) m")
    return 2.0 * config.chirp_slope * d / SPEED_OF_LIGHT


def displacement_to_phase(d: float, lam: float) -> float:
    """Round-trip phase 4*pi*d/lambda of a reflector at distance d."""
    if lam <= 0:
        raise ValueError(f"wavelength must be > 0, got {lam}")
    return 4.0 * np.pi * d / lam


def expected_target_bin(d: float, config: RadarConfig) -> int:
    """Range-FFT bin where a reflector at distance d peaks."""
    return int(round(distance_to_beat_freq(d, config) / config.range_bin_width_hz))


def synthesize_if_frames(config: RadarConfig, scene: Scene,
                         drive: AudioBuffer, seed: int) -> SimArtifacts:
    """Generate the IF frame series for a drive waveform.

    One chirp per frame; the target distance for frame k is
    d0 + vibration_gain * drive[k]. Output is bit-reproducible per seed.
    """
    if drive.sample_rate != config.frame_rate:
        raise RateMismatch(
            f"drive rate {drive.sample_rate} Hz != frame_rate "
            f"{config.frame_rate} Hz"
        )
    validate_scene(scene, config)
    lam = wavelength(config)
    n = np.arange(config.samples_per_chirp)
    n_frames = len(drive.samples)
    dt = n / config.adc_rate

    d_k = scene.target_distance + scene.vibration_gain * drive.samples
    if np.any(d_k >= config.max_range) or np.any(d_k < 0):
        raise OutOfRange("vibrating target leaves [0, max_range)")

    # Target term, vectorized over frames: f0 and phi vary per frame.
    f0_k = 2.0 * config.chirp_slope * d_k / SPEED_OF_LIGHT
    phi_k = 4.0 * np.pi * d_k / lam
    frames = np.exp(1j * (2.0 * np.pi * np.outer(f0_k, dt) + phi_k[:, None]))

    if scene.drift_rate != 0.0:
        k = np.arange(n_frames)
        drift = scene.drift_rate * k / config.frame_rate
        frames *= np.exp(1j * drift)[:, None]

    for d_i, amp in scene.clutter:
        f0 = distance_to_beat_freq(d_i, config)
        phi = displacement_to_phase(d_i, lam)
        frames += amp * np.exp(1j * (2.0 * np.pi * f0 * dt + phi))[None, :]

    rng = np.random.default_rng(seed)
    if scene.noise_std > 0.0:
        noise = rng.normal(0.0, scene.noise_std, (n_frames, len(n), 2))
        frames += noise[..., 0] + 1j * noise[..., 1]

    m = min(scene.spike_samples_per_frame, config.samples_per_chirp)
    if scene.spike_magnitude != 0.0 and m > 0:
        frames[:, :m] += scene.spike_magnitude

    series = IfFrameSeries(frames=frames, config=config)
    return SimArtifacts(
        if_frames=series,
        true_phase=phi_k,
        true_bin=expected_target_bin(scene.target_distance, config),
    )


# Binary IF dump: 32-byte little-endian header then float32 interleaved
# I/Q, row-major [frame][sample]. Normative for cross-tool use.
_MAGIC = b"MMVB"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIdf")  # 28 bytes, zero-padded to 32
_HEADER_SIZE = 32


def write_if_dump(path, series: IfFrameSeries) -> None:
    cfg = series.config
    header = _HEADER.pack(_MAGIC, _VERSION, series.n_frames,
                          cfg.samples_per_chirp, cfg.adc_rate, cfg.frame_rate)
    header = header.ljust(_HEADER_SIZE, b"\x00")
    iq = np.empty((series.n_frames, cfg.samples_per_chirp, 2), dtype="<f4")
    iq[..., 0] = series.frames.real
    iq[..., 1] = series.frames.imag
    with open(path, "wb") as f:
        f.write(header)
        f.write(iq.tobytes())


def read_if_dump(path, config: RadarConfig | None = None) -> IfFrameSeries:
    """Load an IF dump.

    The header does not carry carrier_freq or chirp_slope; pass a
    config to supply them, otherwise defaults are used (they only
    affect the displacement scale, not bin locations).
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER_SIZE:
        raise CorruptHeader(f"{path}: file shorter than the 32-byte header")
    magic, version, n_frames, spc, adc_rate, frame_rate = _HEADER.unpack(
        raw[:_HEADER.size])
    if magic != _MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise CorruptHeader(f"{path}: unsupported version {version}")
    expected = n_frames * spc * 2 * 4
    body = raw[_HEADER_SIZE:]
    if len(body) != expected:
        raise CorruptHeader(
            f"{path}: payload {len(body)} bytes, expected {expected}"
        )
    iq = np.frombuffer(body, dtype="<f4").reshape(n_frames, spc, 2)
    base = config if config is not None else RadarConfig()
    cfg = RadarConfig(
        carrier_freq=base.carrier_freq,
        chirp_slope=base.chirp_slope,
        adc_rate=adc_rate,
        samples_per_chirp=spc,
        frame_rate=frame_rate,
    )
    frames = iq[..., 0].astype(np.float64) + 1j * iq[..., 1].astype(np.float64)
    return IfFrameSeries(frames=frames, config=cfg)
