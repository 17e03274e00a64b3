"""Simulated testbed physics: drive-voltage to field mapping, environmental
disturbance, and magnetometer models.

Fields at this boundary are in nanotesla; the voltage/field fit constants are
in microtesla per volt and microtesla (the testbed's fitted curve units).
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DegenerateFit(ValueError):
    """Raised when the voltage/field fit slope is ~zero and cannot be
    inverted."""


# Fitted voltage -> field curves of the physical coil, measured separately
# for rising and falling drive (hysteresis): field_uT = k * volts + b.
ASCENDING_FIT = (46.333, 1.7623)
DESCENDING_FIT = (46.253, 1.8935)


@dataclass(frozen=True)
class PlantModel:
    """Linear drive model: clamp the voltage, then field_nT = (k*v + b)*1000."""

    fit_k: float  # uT per volt
    fit_b: float  # uT
    v_min: float = 0.0
    v_max: float = 3.0
    sample_rate_hz: float = 200.0

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be < v_max")
        if self.sample_rate_hz <= 0.0:
            raise ValueError("sample_rate_hz must be > 0")

    @classmethod
    def ascending(cls, **kwargs) -> "PlantModel":
        return cls(*ASCENDING_FIT, **kwargs)

    @classmethod
    def descending(cls, **kwargs) -> "PlantModel":
        return cls(*DESCENDING_FIT, **kwargs)


def drive(plant: PlantModel, voltage: float) -> float:
    """Field produced for a drive voltage, nT.  Voltage is clamped to the
    actuation range; clamping is the contract, not an error."""
    v = min(max(voltage, plant.v_min), plant.v_max)
    return (plant.fit_k * v + plant.fit_b) * 1000.0


def inverse_drive(plant: PlantModel, target_field_nt: float) -> float:
    """Voltage that produces the target field, clamped to the actuation
    range.  drive(inverse_drive(f)) == f for reachable f."""
    if abs(plant.fit_k) < 1e-12:
        raise DegenerateFit("fit slope ~0; voltage cannot be inferred")
    v = (target_field_nt / 1000.0 - plant.fit_b) / plant.fit_k
    return min(max(v, plant.v_min), plant.v_max)


@dataclass(frozen=True)
class SensorSpec:
    """Magnetometer model: additive Gaussian noise then quantization."""

    noise_sigma_nt: float = 0.0
    quantization_step_nt: float = 0.0
    sample_rate_hz: float = 200.0

    def __post_init__(self):
        if self.noise_sigma_nt < 0.0:
            raise ValueError("noise_sigma_nt must be >= 0")
        if self.quantization_step_nt < 0.0:
            raise ValueError("quantization_step_nt must be >= 0")
        if self.sample_rate_hz <= 0.0:
            raise ValueError("sample_rate_hz must be > 0")


# Table-of-record sensor models for the two magnetometers on the testbed.
RM3100 = SensorSpec(noise_sigma_nt=15.0, quantization_step_nt=13.0, sample_rate_hz=200.0)
HMC5883L = SensorSpec(noise_sigma_nt=200.0, quantization_step_nt=435.0, sample_rate_hz=75.0)
IDEAL_SENSOR = SensorSpec(noise_sigma_nt=0.0, quantization_step_nt=0.0, sample_rate_hz=200.0)


def sense(spec: SensorSpec, true_field_nt: float, rng: np.random.Generator) -> float:
    """One magnetometer reading of a true field, nT.

    Adds Gaussian noise then rounds half-to-even to the quantization step;
    a zero step means no quantization.  Zero noise and zero step make this
    the identity.
    """
    v = true_field_nt
    if spec.noise_sigma_nt > 0.0:
        v += spec.noise_sigma_nt * rng.standard_normal()
    q = spec.quantization_step_nt
    if q > 0.0:
        # round-half-even, like the sensor's fixed LSB
        v = q * float(np.round(v / q))
    return v


@dataclass(frozen=True)
class DisturbanceSpec:
    """Environmental field disturbance: DC offset, AC tones, and seeded
    Gaussian noise (amplitudes in nT, frequencies in Hz, phases in rad)."""

    dc_offset_nt: float = 0.0
    ac_components: tuple[tuple[float, float, float], ...] = ()
    gaussian_sigma_nt: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for amp, freq, _phase in self.ac_components:
            if amp < 0.0:
                raise ValueError("AC amplitudes must be >= 0")
            if freq <= 0.0:
                raise ValueError("AC frequencies must be > 0")
        if self.gaussian_sigma_nt < 0.0:
            raise ValueError("gaussian_sigma_nt must be >= 0")


def disturbance_at(spec: DisturbanceSpec, t: float) -> float:
    """Disturbance field at time t, nT.

    The Gaussian term is keyed on (seed, bit pattern of t), so identical
    (spec, t) always reproduce the same value and distinct sample instants
    draw independent values.
    """
    v = spec.dc_offset_nt
    for amp, freq, phase in spec.ac_components:
        v += amp * math.sin(2.0 * math.pi * freq * t + phase)
    if spec.gaussian_sigma_nt > 0.0:
        t_bits = struct.unpack("<Q", struct.pack("<d", float(t)))[0]
        rng = np.random.default_rng((spec.seed, t_bits))
        v += spec.gaussian_sigma_nt * rng.standard_normal()
    return v


def snr_to_sigma(signal_power: float, snr_db: float) -> float:
    """Noise standard deviation for a given signal power and SNR in dB."""
    if signal_power < 0.0:
        raise ValueError("signal_power must be >= 0")
    return math.sqrt(signal_power / (10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class TargetProfile:
    """Target field over time, nT.

    kinds: constant, step_up (levels[0] -> levels[1] at switch_time_s),
    step_down (same convention), ramp_up (linear 0 -> level over
    [0, switch_time_s], then hold), from_file (zero-order hold over (t, nT)
    rows loaded via TargetProfile.from_csv).
    """

    kind: str
    levels: tuple[float, ...] = (0.0,)
    switch_time_s: float = 0.0
    samples: tuple[tuple[float, float], ...] = ()

    _KINDS = ("constant", "step_up", "step_down", "ramp_up", "from_file")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        for v in self.levels:
            if not math.isfinite(v):
                raise ValueError("profile levels must be finite")
        if self.kind in ("step_up", "step_down") and len(self.levels) != 2:
            raise ValueError("step profiles need exactly 2 levels")
        if self.kind == "from_file" and not self.samples:
            raise ValueError("from_file profile needs samples")

    @classmethod
    def constant(cls, level_nt: float) -> "TargetProfile":
        return cls("constant", (level_nt,))

    @classmethod
    def step_up(cls, level_nt: float, switch_time_s: float = 0.0) -> "TargetProfile":
        return cls("step_up", (0.0, level_nt), switch_time_s)

    @classmethod
    def step_down(cls, level_nt: float, switch_time_s: float = 0.0) -> "TargetProfile":
        return cls("step_down", (level_nt, 0.0), switch_time_s)

    @classmethod
    def ramp_up(cls, level_nt: float, ramp_time_s: float) -> "TargetProfile":
        return cls("ramp_up", (0.0, level_nt), ramp_time_s)

    @classmethod
    def from_csv(cls, path) -> "TargetProfile":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#") or row[0] == "t_s":
                    continue
                rows.append((float(row[0]), float(row[1])))
        rows.sort()
        return cls("from_file", tuple(v for _, v in rows), samples=tuple(rows))

    def target_at(self, t: float) -> float:
        if self.kind == "constant":
            return self.levels[0]
        if self.kind in ("step_up", "step_down"):
            return self.levels[0] if t < self.switch_time_s else self.levels[1]
        if self.kind == "ramp_up":
            if self.switch_time_s <= 0.0 or t >= self.switch_time_s:
                return self.levels[1]
            if t <= 0.0:
                return self.levels[0]
            return self.levels[1] * (t / self.switch_time_s)
        # from_file: zero-order hold
        value = self.samples[0][1]
        for ts, v in self.samples:
            if ts <= t:
                value = v
            else:
                break
        return value

    def step_magnitude(self) -> float:
        """Magnitude of the commanded change, used for reach-time bands."""
        if self.kind == "constant":
            return abs(self.levels[0])
        if self.kind == "from_file":
            vals = [v for _, v in self.samples]
            return max(vals) - min(vals)
        return abs(self.levels[-1] - self.levels[0])


SENSOR_LOG_HEADER = ("t_s", "true_nT", "disturbance_nT", "measured_nT")


def write_sensor_log_csv(path, rows: Sequence[tuple[float, float, float, float]]) -> None:
    """Write a (t, true, disturbance, measured) trace as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SENSOR_LOG_HEADER)
        for r in rows:
            writer.writerow([repr(float(v)) for v in r])
