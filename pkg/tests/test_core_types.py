"""Domain types: derived quantities, validation, config loading."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmvibro.core_types import (
    SPEED_OF_LIGHT,
    AudioBuffer,
    IfFrameSeries,
    RadarConfig,
    Scene,
    load_radar_config,
    load_scene,
    validate_config,
    validate_scene,
    wavelength,
)
from mmvibro.errors import InvalidConfig


class TestDerivedQuantities:
    def test_default_max_range(self):
        cfg = RadarConfig()
        # c * adc_rate / (4 * S) with defaults
        assert cfg.max_range == pytest.approx(
            SPEED_OF_LIGHT * 2e6 / (4 * 30e12))
        assert cfg.max_range == pytest.approx(4.9965, abs=1e-3)

    def test_default_bin_width(self):
        assert RadarConfig().range_bin_width_hz == pytest.approx(7812.5)

    def test_chirp_fits_frame_slot(self):
        cfg = RadarConfig()
        assert cfg.chirp_duration == pytest.approx(128e-6)
        assert cfg.chirp_duration <= 1.0 / cfg.frame_rate

    def test_wavelength_79ghz(self):
        lam = wavelength(RadarConfig(carrier_freq=79e9))
        assert lam == pytest.approx(3.7948e-3, abs=1e-6)

    def test_wavelength_77ghz(self):
        lam = wavelength(RadarConfig(carrier_freq=77e9))
        assert lam == pytest.approx(3.8934e-3, abs=1e-6)

    @given(st.floats(min_value=1e12, max_value=1e14))
    @settings(max_examples=50, deadline=None)
    def test_max_range_inverse_in_slope(self, slope):
        cfg = RadarConfig(chirp_slope=slope)
        doubled = RadarConfig(chirp_slope=2.0 * slope)
        assert doubled.max_range == pytest.approx(cfg.max_range / 2.0)


class TestValidateConfig:
    def test_default_is_valid(self):
        assert validate_config(RadarConfig()) is not None

    def test_carrier_out_of_band(self):
        with pytest.raises(InvalidConfig) as exc:
            validate_config(RadarConfig(carrier_freq=60e9))
        assert "carrier_freq" in str(exc.value)

    def test_samples_not_power_of_two(self):
        with pytest.raises(InvalidConfig) as exc:
            validate_config(RadarConfig(samples_per_chirp=300))
        assert "power of two" in str(exc.value)

    def test_all_violations_listed(self):
        with pytest.raises(InvalidConfig) as exc:
            validate_config(RadarConfig(carrier_freq=60e9,
                                        samples_per_chirp=300,
                                        chirp_slope=-1.0))
        assert len(exc.value.violations) >= 3

    def test_chirp_longer_than_frame_slot(self):
        with pytest.raises(InvalidConfig) as exc:
            validate_config(RadarConfig(adc_rate=1e5))  # 2.56 ms chirp
        assert "frame slot" in str(exc.value)


class TestValidateScene:
    def test_default_scene_valid(self):
        validate_scene(Scene(), RadarConfig())

    def test_target_beyond_max_range(self):
        with pytest.raises(InvalidConfig):
            validate_scene(Scene(target_distance=6.0), RadarConfig())

    def test_clutter_too_close_to_target(self):
        cfg = RadarConfig()
        bin_m = cfg.range_bin_width_hz * SPEED_OF_LIGHT / (2 * cfg.chirp_slope)
        with pytest.raises(InvalidConfig):
            validate_scene(
                Scene(target_distance=0.5, clutter=((0.5 + bin_m, 0.3),)),
                cfg)

    def test_separated_clutter_ok(self):
        validate_scene(Scene(target_distance=0.5, clutter=((1.0, 0.3),)),
                       RadarConfig())


class TestBuffers:
    def test_audio_rejects_nan(self):
        with pytest.raises(InvalidConfig):
            AudioBuffer(16000.0, np.array([0.0, np.nan]))

    def test_audio_duration(self):
        assert AudioBuffer(4000.0, np.zeros(8000)).duration == 2.0

    def test_frames_shape_checked(self):
        with pytest.raises(InvalidConfig):
            IfFrameSeries(frames=np.zeros((4, 100), dtype=complex),
                          config=RadarConfig())


class TestLoading:
    def test_load_radar_config(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"carrier_freq": 77e9}))
        cfg = load_radar_config(path)
        assert cfg.carrier_freq == 77e9
        assert cfg.adc_rate == 2e6  # defaults fill in

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"carrier": 77e9}))
        with pytest.raises(InvalidConfig) as exc:
            load_radar_config(path)
        assert "unknown key" in str(exc.value)

    def test_load_scene_validates_against_config(self, tmp_path):
        path = tmp_path / "scene.json"
        path.write_text(json.dumps({"target_distance": 9.0}))
        assert load_scene(path).target_distance == 9.0
        with pytest.raises(InvalidConfig):
            load_scene(path, RadarConfig())

    def test_invalid_values_rejected_on_load(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"carrier_freq": 60e9}))
        with pytest.raises(InvalidConfig):
            load_radar_config(path)
