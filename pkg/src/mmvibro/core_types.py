"""Shared domain types and physical-constant derivations.

All values are SI: meters, Hz, seconds, radians. Types are frozen
dataclasses; once constructed they are safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
import numpy as np

from .errors import InvalidConfig

SPEED_OF_LIGHT = 299_792_458.0  # m/s

CARRIER_BAND = (77e9, 81e9)  # Hz, the sensor's FMCW band


@dataclass(frozen=True)
class RadarConfig:
    """Chirp and frame parameters of the simulated FMCW sensor.

    Defaults give a 5 m unambiguous range with 7812.5 Hz range bins
    and one 128 us chirp per 250 us audio frame slot.
    """

    carrier_freq: float = 79e9     # Hz
    chirp_slope: float = 30e12     # Hz/s
    adc_rate: float = 2e6          # Hz
    samples_per_chirp: int = 256
    frame_rate: float = 4000.0     # Hz, one phase sample per frame

    @property
    def max_range(self) -> float:
        """Unambiguous range: beat frequency at this distance is adc_rate/2."""
        return SPEED_OF_LIGHT * self.adc_rate / (4.0 * self.chirp_slope)

    @property
    def range_bin_width_hz(self) -> float:
        return self.adc_rate / self.samples_per_chirp

    @property
    def chirp_duration(self) -> float:
        return self.samples_per_chirp / self.adc_rate


def wavelength(config: RadarConfig) -> float:
    """Carrier wavelength c / f in meters."""
    return SPEED_OF_LIGHT / config.carrier_freq


def _is_power_of_two(n) -> bool:
    return isinstance(n, int) and n > 0 and (n & (n - 1)) == 0


def validate_config(config: RadarConfig) -> RadarConfig:
    """Return ``config`` unchanged iff every invariant holds.

    Raises InvalidConfig listing every violated invariant, one entry
    per field, so callers can report all problems at once.
    """
    violations = []
    lo, hi = CARRIER_BAND
    if not (lo <= config.carrier_freq <= hi):
        violations.append(
            f"carrier_freq {config.carrier_freq:.3e} Hz outside the "
            f"{lo / 1e9:.0f}-{hi / 1e9:.0f} GHz band"
        )
    if config.chirp_slope <= 0:
        violations.append(f"chirp_slope must be > 0, got {config.chirp_slope}")
    if config.adc_rate <= 0:
        violations.append(f"adc_rate must be > 0, got {config.adc_rate}")
    if config.frame_rate <= 0:
        violations.append(f"frame_rate must be > 0, got {config.frame_rate}")
    if not _is_power_of_two(config.samples_per_chirp):
        violations.append(
            f"samples_per_chirp must be a power of two, got "
            f"{config.samples_per_chirp}"
        )
    if not violations and config.adc_rate > 0 and config.frame_rate > 0:
        if config.chirp_duration > 1.0 / config.frame_rate:
            violations.append(
                f"chirp duration {config.chirp_duration:.3e} s exceeds the "
                f"frame slot {1.0 / config.frame_rate:.3e} s"
            )
    if violations:
        raise InvalidConfig(violations)
    return config


@dataclass(frozen=True)
class Scene:
    """A vibrating target plus static clutter and artifact parameters.

    vibration_gain maps unit drive amplitude to peak displacement in
    meters; the 7e-6 default matches earpiece-scale vibrations.
    spike_magnitude is the amplitude of the additive complex transient
    on the first spike_samples_per_frame samples of every frame.
    """

    target_distance: float = 0.5           # m
    vibration_gain: float = 7e-6           # m per unit drive amplitude
    clutter: tuple = ()                    # ((distance_m, rel_amplitude), ...)
    noise_std: float = 0.0                 # relative to target amplitude
    drift_rate: float = 0.0                # rad/s slow phase drift
    spike_magnitude: float = 0.0
    spike_samples_per_frame: int = 0

    def __post_init__(self):
        object.__setattr__(self, "clutter",
                           tuple((float(d), float(a)) for d, a in self.clutter))


def validate_scene(scene: Scene, config: RadarConfig) -> Scene:
    """Check scene invariants against a radar config."""
    violations = []
    if not (0.0 <= scene.target_distance < config.max_range):
        violations.append(
            f"target_distance {scene.target_distance} m not in "
            f"[0, {config.max_range:.2f}) m"
        )
    if scene.vibration_gain <= 0:
        violations.append("vibration_gain must be > 0")
    if scene.noise_std < 0:
        violations.append("noise_std must be >= 0")
    if scene.spike_samples_per_frame < 0:
        violations.append("spike_samples_per_frame must be >= 0")
    # Clutter must sit at least two range bins away from the target so
    # the target peak stays separable.
    bin_m = config.range_bin_width_hz * SPEED_OF_LIGHT / (2.0 * config.chirp_slope)
    for d, _amp in scene.clutter:
        if not (0.0 <= d < config.max_range):
            violations.append(f"clutter at {d} m beyond max_range")
        elif abs(d - scene.target_distance) < 2.0 * bin_m:
            violations.append(
                f"clutter at {d} m within 2 range bins of the target"
            )
    if violations:
        raise InvalidConfig(violations)
    return scene


@dataclass(frozen=True, eq=False)
class IfFrameSeries:
    """Complex IF samples, one row per frame, one chirp per frame."""

    frames: np.ndarray  # complex128 [n_frames, samples_per_chirp]
    config: RadarConfig

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[1] != self.config.samples_per_chirp:
            raise InvalidConfig([
                f"frames shape {arr.shape} does not match samples_per_chirp "
                f"{self.config.samples_per_chirp}"
            ])
        object.__setattr__(self, "frames", arr)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono float audio with an explicit sample rate."""

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64).ravel()
        if not np.all(np.isfinite(arr)):
            raise InvalidConfig(["audio samples must be finite"])
        if self.sample_rate <= 0:
            raise InvalidConfig([f"sample_rate must be > 0, got {self.sample_rate}"])
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class TranscriptPair:
    """A reference/hypothesis transcription pair, optionally tagged."""

    reference: str
    hypothesis: str
    id: str = ""
    distance_cm: float | None = None
    duration_bin: str | None = None


def _load_flat_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise InvalidConfig([f"{path}: expected a JSON object"])
    return doc


def _from_flat_dict(cls, doc: dict, path="<config>"):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise InvalidConfig(
            [f"{path}: unknown key {k!r} (known: {sorted(known)})" for k in unknown]
        )
    return cls(**doc)


def load_radar_config(path) -> RadarConfig:
    """Load and validate a RadarConfig from a flat JSON object."""
    config = _from_flat_dict(RadarConfig, _load_flat_json(path), str(path))
    return validate_config(config)


def load_scene(path, config: RadarConfig | None = None) -> Scene:
    """Load a Scene from a flat JSON object; validate if config given."""
    scene = _from_flat_dict(Scene, _load_flat_json(path), str(path))
    if config is not None:
        validate_scene(scene, config)
    return scene
