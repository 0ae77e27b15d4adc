"""Synthetic radar-audio generation from clean speech.

Recipe, in order: low-pass at 1.1 kHz, add Gaussian noise at an
estimated or given amplitude, low-pass at 2 kHz, resample to 16 kHz.
Includes the noise-floor estimator, SNR helper, and minimal mono WAV
I/O (PCM-16 and float32).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.signal import butter, firwin, resample_poly, sosfilt

from .core_types import AudioBuffer
from .errors import (
    CorruptHeader,
    CutoffAboveNyquist,
    InvalidConfig,
    RateMismatch,
    TooShort,
    UnsupportedFormat,
    ZeroNoise,
)

FROM_REFERENCE = "from_reference"
NOISE_WINDOW_S = 0.05
QUIETEST_FRACTION = 0.1
KAISER_BETA = 8.0
# 128 taps per polyphase branch with the cutoff pulled to 0.95x Nyquist
# puts the stopband entirely below the lower Nyquist rate while keeping
# the passband flat within 0.1 dB up to 0.9x Nyquist.
TAPS_PER_PHASE = 128
CUTOFF_SCALE = 0.95


@dataclass(frozen=True, eq=False)
class SynthesisParams:
    """Knobs of the synthesis recipe; defaults follow the radar-audio
    band limits (content rolls off past 1.1 kHz, Nyquist at 2 kHz)."""

    lpf1_cutoff: float = 1100.0
    lpf2_cutoff: float = 2000.0
    filter_order: int = 6
    radar_rate: float = 4000.0     # intermediate radar-audio rate
    target_rate: float = 16000.0
    noise_std: float | str = 0.0   # linear amplitude or FROM_REFERENCE
    noise_reference: AudioBuffer | None = None
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not (self.lpf1_cutoff < self.lpf2_cutoff < self.target_rate / 2):
            problems.append(
                "cutoffs must satisfy lpf1 < lpf2 < target_rate/2"
            )
        if self.filter_order < 2 or self.filter_order % 2 != 0:
            problems.append("filter_order must be even and >= 2")
        if self.noise_std == FROM_REFERENCE and self.noise_reference is None:
            problems.append("noise_std='from_reference' needs noise_reference")
        if problems:
            raise InvalidConfig(problems)


def butterworth_lowpass(audio: AudioBuffer, cutoff: float,
                        order: int = 6) -> AudioBuffer:
    """Causal Butterworth low-pass via cascaded second-order sections."""
    if cutoff >= audio.sample_rate / 2:
        raise CutoffAboveNyquist(
            f"cutoff {cutoff} Hz >= Nyquist {audio.sample_rate / 2} Hz"
        )
    sos = butter(order, cutoff, btype="low", fs=audio.sample_rate,
                 output="sos")
    return AudioBuffer(sample_rate=audio.sample_rate,
                       samples=sosfilt(sos, audio.samples))


def butterworth_gain(f: float, cutoff: float, order: int) -> float:
    """Analytic magnitude response 1/sqrt(1 + (f/fc)^(2n))."""
    return 1.0 / np.sqrt(1.0 + (f / cutoff) ** (2 * order))


def estimate_noise_amplitude(radar_audio: AudioBuffer) -> float:
    """Noise floor: mean RMS of the quietest 10% of 50 ms windows."""
    if radar_audio.duration < 1.0:
        raise TooShort(
            f"need >= 1 s of audio, got {radar_audio.duration:.3f} s"
        )
    win = int(round(NOISE_WINDOW_S * radar_audio.sample_rate))
    n_win = len(radar_audio.samples) // win
    chunks = radar_audio.samples[:n_win * win].reshape(n_win, win)
    rms = np.sqrt(np.mean(chunks ** 2, axis=1))
    k = max(1, int(round(QUIETEST_FRACTION * n_win)))
    return float(np.mean(np.sort(rms)[:k]))


def add_noise(audio: AudioBuffer, noise_std: float, seed: int) -> AudioBuffer:
    """Add i.i.d. Gaussian noise; identical output for identical seed."""
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    if noise_std == 0:
        return audio
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_std, len(audio.samples))
    return AudioBuffer(sample_rate=audio.sample_rate,
                       samples=audio.samples + noise)


def resample(audio: AudioBuffer, target_rate: float) -> AudioBuffer:
    """Windowed-sinc rate conversion (Kaiser beta=8, 128 taps per phase)."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be > 0, got {target_rate}")
    if target_rate == audio.sample_rate:
        return AudioBuffer(sample_rate=target_rate,
                           samples=audio.samples.copy())
    fs_in, fs_out = int(round(audio.sample_rate)), int(round(target_rate))
    g = gcd(fs_out, fs_in)
    up, down = fs_out // g, fs_in // g
    m = max(up, down)
    taps = firwin(TAPS_PER_PHASE * m + 1, CUTOFF_SCALE / m,
                  window=("kaiser", KAISER_BETA))
    out = resample_poly(audio.samples, up, down, window=taps)
    n_out = int(round(len(audio.samples) * target_rate / audio.sample_rate))
    if len(out) < n_out:
        out = np.pad(out, (0, n_out - len(out)))
    return AudioBuffer(sample_rate=target_rate, samples=out[:n_out])


def _noise_band_compensation(params: SynthesisParams) -> float:
    """Boost factor so the noise floor surviving the post-noise low-pass
    matches the reference floor.

    White noise injected at target_rate keeps only the lpf2 equivalent
    noise bandwidth; the reference radar audio is band-limited already,
    so its estimated floor must be reproduced in-band, not full-band.
    """
    n = params.filter_order
    enb = params.lpf2_cutoff * (np.pi / (2 * n)) / np.sin(np.pi / (2 * n))
    return float(np.sqrt((params.target_rate / 2.0) / enb))


def resolve_noise_std(params: SynthesisParams) -> float:
    if params.noise_std == FROM_REFERENCE:
        floor = estimate_noise_amplitude(params.noise_reference)
        return floor * _noise_band_compensation(params)
    return float(params.noise_std)


def synthesize_radar_audio(clean: AudioBuffer,
                           params: SynthesisParams,
                           trace: list | None = None) -> AudioBuffer:
    """Run the full recipe on 16 kHz clean speech.

    ``trace``, if given, receives one (stage, parameters) entry per
    pipeline stage in execution order.
    """
    if clean.sample_rate != 16000:
        raise RateMismatch(
            f"clean audio must be 16 kHz, got {clean.sample_rate}"
        )

    def log(stage, **kw):
        if trace is not None:
            trace.append({"stage": stage, **kw})

    noise_std = resolve_noise_std(params)
    out = butterworth_lowpass(clean, params.lpf1_cutoff, params.filter_order)
    log("lowpass", cutoff_hz=params.lpf1_cutoff, order=params.filter_order)
    out = add_noise(out, noise_std, params.seed)
    log("add_noise", noise_std=noise_std, seed=params.seed)
    out = butterworth_lowpass(out, params.lpf2_cutoff, params.filter_order)
    log("lowpass", cutoff_hz=params.lpf2_cutoff, order=params.filter_order)
    # Pass through the radar-audio rate before upsampling: real radar
    # audio lives at 4 kHz, so nothing above its Nyquist may survive.
    out = resample(out, params.radar_rate)
    out = resample(out, params.target_rate)
    log("resample", via_rate_hz=params.radar_rate,
        target_rate_hz=params.target_rate)
    return out


def snr_db(signal: AudioBuffer, noise_std: float) -> float:
    """10*log10(mean(signal^2) / noise_std^2)."""
    if noise_std <= 0:
        raise ZeroNoise(f"noise_std must be > 0, got {noise_std}")
    power = float(np.mean(signal.samples ** 2))
    return 10.0 * np.log10(power / noise_std ** 2)


def noise_std_for_snr(signal: AudioBuffer, target_snr_db: float) -> float:
    """Noise amplitude that puts ``signal`` at the target SNR."""
    rms = float(np.sqrt(np.mean(signal.samples ** 2)))
    return rms / 10.0 ** (target_snr_db / 20.0)


# --- WAV I/O (RIFF, mono; PCM-16 or float32; stereo downmixed) ---

def wav_write(audio: AudioBuffer, path) -> None:
    """Write 16-bit PCM mono. Samples are clipped to [-1, 1]."""
    pcm = np.clip(audio.samples, -1.0, 1.0)
    pcm = np.round(pcm * 32767.0).astype("<i2")
    rate = int(round(audio.sample_rate))
    data = pcm.tobytes()
    with open(path, "wb") as f:
        f.write(b"RIFF")
        f.write(struct.pack("<I", 36 + len(data)))
        f.write(b"WAVEfmt ")
        f.write(struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16))
        f.write(b"data")
        f.write(struct.pack("<I", len(data)))
        f.write(data)


def wav_read(path) -> AudioBuffer:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4:pos + 8])
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise CorruptHeader(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or len(fmt) < 16:
        raise CorruptHeader(f"{path}: missing fmt chunk")
    if data is None:
        raise CorruptHeader(f"{path}: missing data chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack("<HHIIHH",
                                                             fmt[:16])
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32767.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormat(
            f"{path}: format {audio_format} at {bits} bits; only PCM-16 "
            "and float32 are supported"
        )
    if channels < 1:
        raise CorruptHeader(f"{path}: zero channels")
    if channels > 1:
        n = len(samples) // channels
        samples = samples[:n * channels].reshape(n, channels).mean(axis=1)
    return AudioBuffer(sample_rate=float(rate), samples=samples)


# --- corpus manifests: one JSON object per line ---

def read_manifest(path) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def write_manifest(path, entries) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry, sort_keys=True) + "\n")


def utterance_seed(corpus_seed: int, utterance_id: str) -> int:
    """Stable per-utterance seed so parallel workers stay deterministic."""
    import hashlib
    digest = hashlib.sha256(
        f"{corpus_seed}:{utterance_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
