import math

import numpy as np
import pytest

from coilsim.plant import (
    ASCENDING_FIT,
    DESCENDING_FIT,
    HMC5883L,
    IDEAL_SENSOR,
    RM3100,
    DegenerateFit,
    DisturbanceSpec,
    PlantModel,
    SensorSpec,
    TargetProfile,
    disturbance_at,
    drive,
    inverse_drive,
    sense,
    snr_to_sigma,
    write_sensor_log_csv,
)


class TestDrive:
    def test_ascending_full_scale(self):
        p = PlantModel.ascending()
        assert drive(p, 3.0) == pytest.approx((46.333 * 3 + 1.7623) * 1000.0)
        assert drive(p, 3.0) == pytest.approx(140_761.3, rel=1e-6)

    def test_zero_fit_gives_zero(self):
        p = PlantModel(fit_k=0.0, fit_b=0.0)
        assert drive(p, 0.0) == 0.0

    def test_clamps_to_range(self):
        p = PlantModel.ascending()
        assert drive(p, 5.0) == drive(p, 3.0)
        assert drive(p, -1.0) == drive(p, 0.0)

    def test_monotone_affine_inside_range(self):
        p = PlantModel.descending()
        vs = np.linspace(0.0, 3.0, 31)
        fields = [drive(p, v) for v in vs]
        assert all(a < b for a, b in zip(fields, fields[1:]))
        # affine: second differences vanish
        d2 = np.diff(fields, 2)
        assert np.all(np.abs(d2) < 1e-6)


class TestInverseDrive:
    def test_round_trip_identity(self):
        p = PlantModel.ascending()
        for f in (5_000.0, 60_000.0, 120_000.0, 140_000.0):
            back = drive(p, inverse_drive(p, f))
            assert back == pytest.approx(f, rel=1e-9)

    def test_target_120000_voltage(self):
        p = PlantModel.ascending()
        assert inverse_drive(p, 120_000.0) == pytest.approx(2.552, abs=1e-3)

    def test_above_range_clamps_to_vmax(self):
        p = PlantModel.ascending()
        assert inverse_drive(p, 1e9) == p.v_max

    def test_degenerate_fit(self):
        p = PlantModel(fit_k=1e-13, fit_b=0.0)
        with pytest.raises(DegenerateFit):
            inverse_drive(p, 1000.0)


class TestSensor:
    def test_identity_without_noise_or_quantization(self):
        rng = np.random.default_rng(0)
        assert sense(IDEAL_SENSOR, 12345.678, rng) == 12345.678

    def test_quantization_multiples(self):
        rng = np.random.default_rng(1)
        spec = SensorSpec(noise_sigma_nt=0.0, quantization_step_nt=435.0)
        for f in (0.0, 120_000.0, 33_333.3, -7_777.7):
            v = sense(spec, f, rng)
            assert v == pytest.approx(435.0 * round(v / 435.0), abs=1e-9)

    def test_round_half_even(self):
        rng = np.random.default_rng(2)
        spec = SensorSpec(quantization_step_nt=2.0)
        assert sense(spec, 3.0, rng) == 4.0  # 1.5 LSB -> 2 LSB
        assert sense(spec, 5.0, rng) == 4.0  # 2.5 LSB -> 2 LSB

    def test_noise_sigma_estimate(self):
        rng = np.random.default_rng(3)
        vals = np.array([sense(RM3100, 1000.0, rng) for _ in range(10_000)])
        # quantization at 13 nT adds ~uniform(step^2/12) on top of 15 nT noise
        expected = math.sqrt(15.0**2 + 13.0**2 / 12.0)
        assert np.std(vals) == pytest.approx(expected, rel=0.05)

    def test_table_sensor_models(self):
        assert HMC5883L.quantization_step_nt == 435.0
        assert HMC5883L.noise_sigma_nt == 200.0
        assert HMC5883L.sample_rate_hz == 75.0
        assert RM3100.sample_rate_hz == 200.0


class TestDisturbance:
    def test_all_zero_spec(self):
        spec = DisturbanceSpec()
        assert all(disturbance_at(spec, t) == 0.0 for t in (0.0, 0.1, 2.7))

    def test_dc_only(self):
        spec = DisturbanceSpec(dc_offset_nt=512.0)
        assert all(disturbance_at(spec, t) == 512.0 for t in (0.0, 1.0, 9.9))

    def test_ac_component(self):
        spec = DisturbanceSpec(ac_components=((100.0, 2.0, 0.0),))
        assert disturbance_at(spec, 0.0) == pytest.approx(0.0, abs=1e-12)
        assert disturbance_at(spec, 0.125) == pytest.approx(100.0, rel=1e-12)

    def test_gaussian_sigma_estimate(self):
        spec = DisturbanceSpec(gaussian_sigma_nt=50.0, seed=7)
        ts = np.arange(100_000) * 1e-3
        vals = np.array([disturbance_at(spec, t) for t in ts])
        assert np.std(vals) == pytest.approx(50.0, rel=0.02)

    def test_deterministic_per_time(self):
        spec = DisturbanceSpec(gaussian_sigma_nt=50.0, seed=7)
        assert disturbance_at(spec, 0.123) == disturbance_at(spec, 0.123)
        assert disturbance_at(spec, 0.123) != disturbance_at(spec, 0.124)
        other = DisturbanceSpec(gaussian_sigma_nt=50.0, seed=8)
        assert disturbance_at(spec, 0.123) != disturbance_at(other, 0.123)

    def test_validation(self):
        with pytest.raises(ValueError):
            DisturbanceSpec(ac_components=((-1.0, 1.0, 0.0),))
        with pytest.raises(ValueError):
            DisturbanceSpec(ac_components=((1.0, 0.0, 0.0),))


class TestSnr:
    def test_definition_points(self):
        assert snr_to_sigma(1.0, 0.0) == 1.0
        assert snr_to_sigma(1.0, 30.0) == pytest.approx(0.03162, rel=1e-3)
        assert snr_to_sigma(1.0, 10.0) == pytest.approx(0.3162, rel=1e-3)


class TestTargetProfile:
    def test_constant(self):
        p = TargetProfile.constant(29_950.1)
        assert p.target_at(0.0) == p.target_at(100.0) == 29_950.1

    def test_step_up_down(self):
        up = TargetProfile.step_up(120_000.0, switch_time_s=2.0)
        assert up.target_at(1.99) == 0.0
        assert up.target_at(2.0) == 120_000.0
        assert up.step_magnitude() == 120_000.0
        down = TargetProfile.step_down(120_000.0, switch_time_s=1.0)
        assert down.target_at(0.5) == 120_000.0
        assert down.target_at(1.5) == 0.0

    def test_ramp(self):
        p = TargetProfile.ramp_up(1000.0, ramp_time_s=2.0)
        assert p.target_at(0.0) == 0.0
        assert p.target_at(1.0) == pytest.approx(500.0)
        assert p.target_at(5.0) == 1000.0

    def test_from_csv(self, tmp_path):
        f = tmp_path / "profile.csv"
        f.write_text("t_s,target_nT\n0.0,0.0\n1.0,500.0\n2.0,125.0\n")
        p = TargetProfile.from_csv(f)
        assert p.target_at(0.5) == 0.0
        assert p.target_at(1.5) == 500.0
        assert p.target_at(10.0) == 125.0
        assert p.step_magnitude() == 500.0

    def test_validation(self):
        with pytest.raises(ValueError):
            TargetProfile("wiggle")
        with pytest.raises(ValueError):
            TargetProfile("step_up", (0.0,))


class TestSensorLog:
    def test_csv_header_and_rows(self, tmp_path):
        rows = [(0.0, 1.0, 0.5, 1.2), (0.01, 1.1, 0.4, 1.0)]
        path = tmp_path / "log.csv"
        write_sensor_log_csv(path, rows)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t_s,true_nT,disturbance_nT,measured_nT"
        assert len(lines) == 3


class TestFitConstants:
    def test_paper_fit_pairs(self):
        assert ASCENDING_FIT == (46.333, 1.7623)
        assert DESCENDING_FIT == (46.253, 1.8935)
