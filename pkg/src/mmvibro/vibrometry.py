"""Audio recovery from IF frames.

Stages: range-FFT with a Hann window, stable-peak bin selection,
per-frame phase extraction, sequential unwrapping, statistical error
correction (spike repair + drift-baseline removal), and conversion of
phase to displacement/audio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .core_types import AudioBuffer, IfFrameSeries, wavelength
from .errors import AllFlagged, BadLength, NoStablePeak, SilentSignal

DEFAULT_MAD_THRESHOLD = 6.0
DEFAULT_SPIKE_WINDOW = 2
MIN_FRAMES_FOR_TRACKING = 16
PEAK_OCCUPANCY_THRESHOLD = 0.5
SILENCE_FLOOR_M = 1e-9
NORMALIZE_PEAK = 0.9


@dataclass(frozen=True, eq=False)
class PhaseSeries:
    """Per-frame phase at one range bin, wrapped or unwrapped."""

    values: np.ndarray  # radians
    frame_rate: float
    bin: int

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64).ravel()
        if len(arr) == 0:
            raise ValueError("phase series must be non-empty")
        object.__setattr__(self, "values", arr)


def range_fft(frame: np.ndarray) -> np.ndarray:
    """DFT of the Hann-windowed chirp; bin b maps to b*adc_rate/N Hz."""
    frame = np.asarray(frame)
    n = frame.shape[-1]
    if n < 2 or (n & (n - 1)) != 0:
        raise BadLength(f"frame length {n} is not a power of two")
    window = get_window("hann", n)
    return np.fft.fft(frame * window, axis=-1)


def locate_target_bin(frames: IfFrameSeries) -> int:
    """Mode of the per-frame magnitude argmax (DC bin excluded).

    Only the unambiguous half of the spectrum is searched. Raises
    NoStablePeak when the modal bin holds in under half the frames.
    """
    if frames.n_frames < MIN_FRAMES_FOR_TRACKING:
        raise NoStablePeak(
            f"need at least {MIN_FRAMES_FOR_TRACKING} frames, got "
            f"{frames.n_frames}"
        )
    half = frames.config.samples_per_chirp // 2
    spectra = range_fft(frames.frames)
    mags = np.abs(spectra[:, 1:half + 1])
    per_frame = np.argmax(mags, axis=1) + 1  # argmax ties go to smaller bin
    bins, counts = np.unique(per_frame, return_counts=True)
    best = counts.argmax()
    # np.unique sorts ascending, so ties on count resolve to the smaller bin
    occupancy = counts[best] / frames.n_frames
    if occupancy < PEAK_OCCUPANCY_THRESHOLD:
        raise NoStablePeak(
            f"modal bin {bins[best]} holds in only {occupancy:.0%} of frames"
        )
    return int(bins[best])


def extract_phase_series(frames: IfFrameSeries, bin: int) -> PhaseSeries:
    """Wrapped phase of the range-FFT at the chosen bin, per frame."""
    if not (0 <= bin < frames.config.samples_per_chirp):
        raise IndexError(f"bin {bin} out of range")
    spectra = range_fft(frames.frames)
    return PhaseSeries(values=np.angle(spectra[:, bin]),
                       frame_rate=frames.config.frame_rate, bin=bin)


def unwrap_phase(wrapped: PhaseSeries) -> PhaseSeries:
    """Sequential unwrap: fold successive jumps beyond pi back by 2*pi."""
    return PhaseSeries(values=np.unwrap(wrapped.values),
                       frame_rate=wrapped.frame_rate, bin=wrapped.bin)


def wrap_phase(unwrapped: PhaseSeries) -> PhaseSeries:
    """Inverse of unwrap_phase: map values back into (-pi, pi]."""
    v = np.mod(-unwrapped.values + np.pi, 2.0 * np.pi)
    return PhaseSeries(values=np.pi - v, frame_rate=unwrapped.frame_rate,
                       bin=unwrapped.bin)


def _flag_outliers(values: np.ndarray, spike_window: int,
                   mad_threshold: float) -> np.ndarray:
    """Flag samples whose first difference is a robust outlier.

    The leading spike_window samples of the series are held to half
    the threshold: frame-start transients land there, and a fixed
    stricter bar keeps repeated correction passes from re-flagging
    clean data (the correction must be idempotent).
    """
    diffs = np.diff(values)
    med = np.median(diffs)
    mad = np.median(np.abs(diffs - med))
    scale = max(mad, 1e-12)
    dev = np.abs(diffs - med)
    flags = np.zeros(len(values), dtype=bool)
    outlier = dev > mad_threshold * scale
    # diff k spans samples k and k+1; both endpoints are suspect
    flags[:-1] |= outlier
    flags[1:] |= outlier
    w = min(spike_window, len(diffs))
    suspect = dev[:w] > 0.5 * mad_threshold * scale
    flags[:w] |= suspect
    flags[1:w + 1] |= suspect
    return flags


def _interpolate_flagged(values: np.ndarray, flags: np.ndarray) -> np.ndarray:
    good = ~flags
    idx = np.arange(len(values))
    out = values.copy()
    out[flags] = np.interp(idx[flags], idx[good], values[good])
    return out


def _hat_baseline(values: np.ndarray, knot_spacing: int) -> np.ndarray:
    """Least-squares piecewise-linear baseline with evenly spaced knots.

    An orthogonal projection, so subtracting it is exactly idempotent;
    knots every knot_spacing samples make it a high-pass around
    frame_rate / knot_spacing Hz.
    """
    n = len(values)
    n_seg = max(1, int(round(n / knot_spacing)))
    knots = np.linspace(0, n - 1, n_seg + 1)
    idx = np.arange(n, dtype=np.float64)
    basis = np.empty((n, len(knots)))
    for j, k in enumerate(knots):
        left = knots[j - 1] if j > 0 else k
        right = knots[j + 1] if j + 1 < len(knots) else k
        up = np.zeros(n) if j == 0 else np.clip((idx - left) / (k - left), 0, 1)
        down = np.ones(n) if j + 1 == len(knots) else np.clip(
            (right - idx) / (right - k), 0, 1)
        basis[:, j] = np.minimum(up, down) if 0 < j < len(knots) - 1 else (
            down if j == 0 else up)
    coef, *_ = np.linalg.lstsq(basis, values, rcond=None)
    return basis @ coef


def correct_errors(phase: PhaseSeries,
                   spike_window: int = DEFAULT_SPIKE_WINDOW,
                   mad_threshold: float = DEFAULT_MAD_THRESHOLD) -> PhaseSeries:
    """Repair spikes and remove slow drift from an unwrapped series.

    Spike repair: first-difference outliers beyond mad_threshold MADs
    (half that within the leading spike_window samples) are replaced by
    linear interpolation between the nearest clean neighbors. Drift
    removal: a least-squares piecewise-linear baseline with 50 ms knot
    spacing is subtracted, high-passing the series around 20 Hz; the
    output has zero mean.
    """
    v = phase.values
    flags = _flag_outliers(v, spike_window, mad_threshold)
    if flags.mean() > 0.5:
        raise AllFlagged(
            f"{flags.sum()} of {len(v)} samples flagged; capture unusable"
        )
    if flags.all() or (~flags).sum() == 0:
        raise AllFlagged("no clean samples to interpolate from")
    repaired = _interpolate_flagged(v, flags)
    knot_spacing = max(2, int(round(phase.frame_rate / 20.0)))
    out = repaired - _hat_baseline(repaired, knot_spacing)
    out -= out.mean()
    return PhaseSeries(values=out, frame_rate=phase.frame_rate, bin=phase.bin)


def phase_to_audio(phase: PhaseSeries, lam: float,
                   normalize: bool = True) -> AudioBuffer:
    """Convert phase to displacement d = phi * lambda / (4*pi)."""
    disp = phase.values * lam / (4.0 * np.pi)
    peak = np.abs(disp).max()
    if peak < SILENCE_FLOOR_M:
        raise SilentSignal(
            f"peak displacement {peak:.3e} m below {SILENCE_FLOOR_M} m"
        )
    samples = disp * (NORMALIZE_PEAK / peak) if normalize else disp
    return AudioBuffer(sample_rate=phase.frame_rate, samples=samples)


def extract_audio(frames: IfFrameSeries,
                  spike_window: int = DEFAULT_SPIKE_WINDOW,
                  mad_threshold: float = DEFAULT_MAD_THRESHOLD,
                  normalize: bool = True,
                  correct: bool = True) -> AudioBuffer:
    """Full extraction chain with module defaults.

    ``correct=False`` skips the error-correction stage; useful for
    measuring how much the correction buys.
    """
    bin_ = locate_target_bin(frames)
    phase = unwrap_phase(extract_phase_series(frames, bin_))
    if correct:
        phase = correct_errors(phase, spike_window, mad_threshold)
    else:
        phase = PhaseSeries(values=phase.values - phase.values.mean(),
                            frame_rate=phase.frame_rate, bin=phase.bin)
    return phase_to_audio(phase, wavelength(frames.config), normalize)
