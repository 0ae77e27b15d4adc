"""Synthetic radar-audio pipeline: filters, noise, resampling, WAV I/O."""

import numpy as np
import pytest

from mmvibro import corpus_synth as cs
from mmvibro.core_types import AudioBuffer
from mmvibro.errors import (
    CorruptHeader,
    CutoffAboveNyquist,
    InvalidConfig,
    RateMismatch,
    TooShort,
    UnsupportedFormat,
    ZeroNoise,
)


def tone(freq, rate=16000.0, duration=2.0, amp=1.0):
    t = np.arange(int(duration * rate)) / rate
    return AudioBuffer(rate, amp * np.sin(2 * np.pi * freq * t))


def steady_rms(buf, skip=0.25):
    n = int(skip * len(buf.samples))
    return float(np.sqrt(np.mean(buf.samples[n:] ** 2)))


class TestButterworth:
    def test_dc_unity_gain(self):
        out = cs.butterworth_lowpass(AudioBuffer(16000.0, np.ones(16000)),
                                     1100.0)
        assert out.samples[-1] == pytest.approx(1.0, abs=1e-6)

    def test_stopband_attenuation(self):
        x = tone(3000.0)
        out = cs.butterworth_lowpass(x, 1100.0, order=6)
        atten = 20 * np.log10(steady_rms(out) / steady_rms(x))
        assert atten < -50.0

    def test_half_power_at_cutoff(self):
        x = tone(1100.0)
        out = cs.butterworth_lowpass(x, 1100.0, order=6)
        assert steady_rms(out) / steady_rms(x) == pytest.approx(
            2 ** -0.5, rel=0.02)

    def test_analytic_gain_formula(self):
        assert cs.butterworth_gain(1100.0, 1100.0, 6) == pytest.approx(
            2 ** -0.5)
        assert cs.butterworth_gain(2200.0, 1100.0, 6) == pytest.approx(
            1 / np.sqrt(1 + 2 ** 12))
        assert cs.butterworth_gain(0.0, 1100.0, 6) == 1.0

    def test_cutoff_above_nyquist(self):
        with pytest.raises(CutoffAboveNyquist):
            cs.butterworth_lowpass(tone(100.0, rate=4000.0), 2000.0)


class TestNoise:
    def test_estimator_on_pure_noise(self):
        rng = np.random.default_rng(7)
        buf = AudioBuffer(16000.0, rng.normal(0, 0.1, 32000))
        est = cs.estimate_noise_amplitude(buf)
        assert 0.08 <= est <= 0.11

    def test_estimator_uses_quiet_windows(self):
        # speech-like bursts with silent gaps carrying only noise
        rng = np.random.default_rng(3)
        rate = 16000
        sig = np.zeros(rate * 2)
        t = np.arange(rate // 2) / rate
        burst = 0.8 * np.sin(2 * np.pi * 300 * t)
        sig[0:rate // 2] = burst
        sig[rate:rate + rate // 2] = burst
        sig += rng.normal(0, 0.05, len(sig))
        est = cs.estimate_noise_amplitude(AudioBuffer(16000.0, sig))
        assert 0.04 <= est <= 0.06

    def test_too_short(self):
        with pytest.raises(TooShort):
            cs.estimate_noise_amplitude(AudioBuffer(16000.0, np.zeros(8000)))

    def test_add_noise_deterministic(self):
        buf = tone(440.0)
        a = cs.add_noise(buf, 0.1, seed=5)
        b = cs.add_noise(buf, 0.1, seed=5)
        c = cs.add_noise(buf, 0.1, seed=6)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_add_zero_noise_is_identity(self):
        buf = tone(440.0)
        assert np.array_equal(cs.add_noise(buf, 0.0, seed=1).samples,
                              buf.samples)

    def test_snr_example(self):
        # unit sine has RMS 1/sqrt(2); std 0.3976 puts it at 5 dB
        assert cs.snr_db(tone(440.0), 0.3976) == pytest.approx(5.0, abs=0.01)

    def test_snr_zero_noise_raises(self):
        with pytest.raises(ZeroNoise):
            cs.snr_db(tone(440.0), 0.0)

    def test_noise_std_for_snr_inverts_snr_db(self):
        buf = tone(440.0, amp=0.7)
        std = cs.noise_std_for_snr(buf, 5.0)
        assert cs.snr_db(buf, std) == pytest.approx(5.0, abs=1e-9)


class TestResample:
    def test_identity_rate(self):
        buf = tone(440.0, rate=4000.0)
        out = cs.resample(buf, 4000.0)
        assert out.sample_rate == 4000.0
        assert np.array_equal(out.samples, buf.samples)
        assert out.samples is not buf.samples

    def test_length_scaling(self):
        buf = tone(440.0, rate=4000.0, duration=1.0)
        assert len(cs.resample(buf, 16000.0)) == 16000
        assert len(cs.resample(buf, 3000.0)) == 3000

    def test_upsample_preserves_tone(self):
        buf = tone(440.0, rate=4000.0)
        out = cs.resample(buf, 16000.0)
        ref = tone(440.0, rate=16000.0)
        n = len(out.samples)
        # interior comparison avoids filter edge transients
        s = slice(n // 4, 3 * n // 4)
        rms_err = np.sqrt(np.mean((out.samples[s] - ref.samples[s]) ** 2))
        assert rms_err < 0.02

    def test_downsample_rejects_out_of_band(self):
        buf = tone(3000.0, rate=16000.0)
        out = cs.resample(buf, 4000.0)
        assert steady_rms(out) < 0.01  # 3 kHz is above the 2 kHz Nyquist


class TestSynthesis:
    def test_output_rate_and_length(self):
        out = cs.synthesize_radar_audio(tone(440.0), cs.SynthesisParams())
        assert out.sample_rate == 16000.0
        assert len(out) == 32000

    def test_requires_16k_input(self):
        with pytest.raises(RateMismatch):
            cs.synthesize_radar_audio(tone(440.0, rate=8000.0),
                                      cs.SynthesisParams())

    def test_spectral_contract(self):
        out = cs.synthesize_radar_audio(tone(440.0),
                                        cs.SynthesisParams(noise_std=0.05,
                                                           seed=1))
        spec = np.abs(np.fft.rfft(out.samples * np.hanning(len(out))))
        freqs = np.fft.rfftfreq(len(out), 1 / 16000.0)
        total = np.sum(spec ** 2)
        above = np.sum(spec[freqs > 2000.0] ** 2)
        assert 10 * np.log10(above / total) < -40.0

    def test_3khz_content_removed(self):
        clean = AudioBuffer(16000.0, tone(440.0).samples
                            + tone(3000.0).samples)
        out = cs.synthesize_radar_audio(clean, cs.SynthesisParams())
        spec = np.abs(np.fft.rfft(out.samples))
        freqs = np.fft.rfftfreq(len(out), 1 / 16000.0)
        k440 = np.argmin(np.abs(freqs - 440.0))
        band_3k = (freqs > 2800) & (freqs < 3200)
        assert spec[band_3k].max() < 1e-3 * spec[k440]

    def test_deterministic(self):
        p = cs.SynthesisParams(noise_std=0.05, seed=42)
        a = cs.synthesize_radar_audio(tone(300.0), p)
        b = cs.synthesize_radar_audio(tone(300.0), p)
        assert np.array_equal(a.samples, b.samples)

    def test_trace_records_stages_in_order(self):
        trace = []
        cs.synthesize_radar_audio(tone(440.0), cs.SynthesisParams(),
                                  trace=trace)
        assert [t["stage"] for t in trace] == [
            "lowpass", "add_noise", "lowpass", "resample"]
        assert trace[0]["cutoff_hz"] == 1100.0
        assert trace[2]["cutoff_hz"] == 2000.0

    def test_from_reference_reproduces_noise_floor(self):
        rng = np.random.default_rng(1)
        s = 0.05
        ref = AudioBuffer(16000.0, rng.normal(0, s, 32000))
        silent = AudioBuffer(16000.0, np.zeros(32000))
        p = cs.SynthesisParams(noise_std=cs.FROM_REFERENCE,
                               noise_reference=ref, seed=7)
        out = cs.synthesize_radar_audio(silent, p)
        floor = float(np.std(out.samples))
        assert 0.8 * s <= floor <= 1.2 * s

    def test_from_reference_without_reference_rejected(self):
        with pytest.raises(InvalidConfig):
            cs.SynthesisParams(noise_std=cs.FROM_REFERENCE)

    def test_bad_cutoff_ordering_rejected(self):
        with pytest.raises(InvalidConfig):
            cs.SynthesisParams(lpf1_cutoff=2500.0)


class TestWav:
    def test_round_trip_within_one_lsb(self, tmp_path):
        buf = tone(440.0, amp=0.8)
        path = tmp_path / "t.wav"
        cs.wav_write(buf, path)
        back = cs.wav_read(path)
        assert back.sample_rate == 16000.0
        assert np.max(np.abs(back.samples - buf.samples)) <= 2 ** -15

    def test_clipping_on_write(self, tmp_path):
        buf = AudioBuffer(16000.0, np.array([2.0, -2.0, 0.0]))
        path = tmp_path / "t.wav"
        cs.wav_write(buf, path)
        back = cs.wav_read(path)
        assert np.allclose(back.samples, [1.0, -1.0, 0.0], atol=2 ** -15)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "t.wav"
        path.write_bytes(b"RIFF\x10\x00\x00\x00WAV")
        with pytest.raises(CorruptHeader):
            cs.wav_read(path)

    def test_24_bit_unsupported(self, tmp_path):
        import struct
        fmt = struct.pack("<IHHIIHH", 16, 1, 1, 16000, 16000 * 3, 3, 24)
        data = b"\x00" * 6
        body = b"WAVEfmt " + fmt + b"data" + struct.pack("<I", len(data)) + data
        raw = b"RIFF" + struct.pack("<I", len(body)) + body
        path = tmp_path / "t.wav"
        path.write_bytes(raw)
        with pytest.raises(UnsupportedFormat):
            cs.wav_read(path)

    def test_float32_read(self, tmp_path):
        import struct
        samples = np.array([0.25, -0.5, 1.0], dtype="<f4")
        data = samples.tobytes()
        fmt = struct.pack("<IHHIIHH", 16, 3, 1, 16000, 16000 * 4, 4, 32)
        body = b"WAVEfmt " + fmt + b"data" + struct.pack("<I", len(data)) + data
        path = tmp_path / "t.wav"
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        back = cs.wav_read(path)
        assert np.allclose(back.samples, [0.25, -0.5, 1.0])

    def test_stereo_downmix(self, tmp_path):
        import struct
        pcm = np.array([10000, 20000, -10000, 0], dtype="<i2")  # 2 frames
        data = pcm.tobytes()
        fmt = struct.pack("<IHHIIHH", 16, 1, 2, 16000, 16000 * 4, 4, 16)
        body = b"WAVEfmt " + fmt + b"data" + struct.pack("<I", len(data)) + data
        path = tmp_path / "t.wav"
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        back = cs.wav_read(path)
        assert np.allclose(back.samples * 32767.0, [15000.0, -5000.0])


class TestManifest:
    def test_round_trip(self, tmp_path):
        entries = [{"id": "u1", "text": "hello"}, {"id": "u2", "text": "hi"}]
        path = tmp_path / "manifest.jsonl"
        cs.write_manifest(path, entries)
        assert cs.read_manifest(path) == entries

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text('{"id": "u1"}\n\n{"id": "u2"}\n')
        assert len(cs.read_manifest(path)) == 2

    def test_utterance_seed_stable_and_distinct(self):
        assert cs.utterance_seed(1, "u1") == cs.utterance_seed(1, "u1")
        assert cs.utterance_seed(1, "u1") != cs.utterance_seed(1, "u2")
        assert cs.utterance_seed(1, "u1") != cs.utterance_seed(2, "u1")
