"""MOX and electrochemical sensor models, and the alternating dual-sensor rig.

Both sensors report a normalised relative response: zero in clean air and
growing with concentration. For the MOX part that is the relative change of
the load-resistor voltage against its clean-air level; for the
electrochemical cell it is the Cottrell current relative to the current a
unit concentration produces.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, EstimationError, NotReadyError
from .plume import Environment

FARADAY = 96485.0  # C/mol


class SensorKind(str, enum.Enum):
    MOX = "MOX"
    EC = "EC"


def mox_resistance(V_c: float, V_RL: float, R_L: float) -> float:
    """Sensor resistance from the load-resistor divider: (V_c / V_RL - 1) * R_L."""
    if R_L <= 0:
        raise DomainError("R_L must be positive")
    if V_RL <= 0:
        raise DomainError("V_RL must be positive")
    if V_RL > V_c:
        raise DomainError("V_RL cannot exceed the circuit voltage")
    return (V_c / V_RL - 1.0) * R_L


@dataclass(frozen=True)
class EnvCorrection:
    """Linear temperature/humidity sensitivity, removed at read time."""

    temp_coeff: float = -0.005  # fraction per degC away from reference
    humidity_coeff: float = -0.002  # fraction per %RH away from reference
    ref_temperature: float = 25.0
    ref_humidity: float = 50.0

    def factor(self, env: Environment) -> float:
        return (1.0 + self.temp_coeff * (env.temperature - self.ref_temperature)) * (
            1.0 + self.humidity_coeff * (env.humidity - self.ref_humidity)
        )

    def apply(self, value: float, env: Environment) -> float:
        return value * self.factor(env)

    def correct(self, value: float, env: Environment) -> float:
        return value / self.factor(env)


@dataclass(frozen=True)
class MoxSensorParams:
    R_L: float = 10_000.0  # ohm
    V_c: float = 5.0  # V
    V_air: float = 0.5  # V_RL in clean air
    V_cal: float = 4.5  # V_RL at the calibration concentration
    c_cal: float = 100.0  # calibration concentration
    c_knee: float = 10.0  # log-linear knee
    response_time_constant: float = 0.5  # s
    drift_rate: float = 1e-4  # value units per s
    warmup_time: float = 3600.0  # s
    noise: float = 0.05  # multiplicative, fraction
    noise_floor: float = 0.002  # additive, value units
    env: EnvCorrection = field(default_factory=EnvCorrection)

    def __post_init__(self):
        if self.R_L <= 0:
            raise ConfigurationError("R_L must be positive")
        if not 0 < self.V_air < self.V_cal < self.V_c:
            raise ConfigurationError("need 0 < V_air < V_cal < V_c")
        if self.response_time_constant <= 0:
            raise ConfigurationError("response_time_constant must be positive")

    @property
    def slope(self) -> float:
        return (self.V_cal - self.V_air) / math.log1p(self.c_cal / self.c_knee)

    def v_rl(self, concentration: float) -> float:
        """Two-point calibrated log-linear sensitivity curve, capped below V_c."""
        v = self.V_air + self.slope * math.log1p(max(concentration, 0.0) / self.c_knee)
        return min(v, 0.98 * self.V_c)

    def equilibrium(self, concentration: float) -> float:
        return self.v_rl(concentration) / self.V_air - 1.0

    def to_raw(self, value: float) -> float:
        v = min(max(self.V_air * (1.0 + value), 1e-9), self.V_c)
        return mox_resistance(self.V_c, v, self.R_L)


@dataclass(frozen=True)
class EcSensorParams:
    n_e: float = 2.0
    F: float = FARADAY
    A: float = 2.25  # cm^2
    D_k: float = 1e-5  # cm^2/s
    molar_scale: float = 1e-9  # mol/cm^3 per unit field concentration
    sample_time: float = 1.0  # s into the chronoamperometric sequence
    reduction_potential: float = 0.8  # V
    response_time_constant: float = 1.5  # s
    drift_rate: float = 5e-5  # value units per s
    warmup_time: float = 90.0  # s
    noise: float = 0.1
    noise_floor: float = 0.005
    env: EnvCorrection = field(default_factory=EnvCorrection)

    def __post_init__(self):
        if self.A <= 0 or self.D_k <= 0:
            raise ConfigurationError("A and D_k must be positive")
        if self.F != FARADAY:
            raise ConfigurationError("F is fixed at 96485 C/mol")
        if self.response_time_constant <= 0:
            raise ConfigurationError("response_time_constant must be positive")

    @property
    def unit_current(self) -> float:
        return cottrell_current(self, self.molar_scale, self.sample_time)

    def equilibrium(self, concentration: float) -> float:
        c_k = max(concentration, 0.0) * self.molar_scale
        return cottrell_current(self, c_k, self.sample_time) / self.unit_current

    def to_raw(self, value: float) -> float:
        return value * self.unit_current


def cottrell_current(p: EcSensorParams, c_k: float, t: float) -> float:
    """Chronoamperometric current n_e F A c_k sqrt(D_k) / sqrt(pi t), in amperes."""
    if t <= 0:
        raise DomainError("Cottrell current is singular at t <= 0")
    if c_k < 0:
        raise DomainError("concentration must be non-negative")
    return p.n_e * p.F * p.A * c_k * math.sqrt(p.D_k) / math.sqrt(math.pi * t)


def ec_fast_estimate(transient: Sequence[tuple[float, float]], p: EcSensorParams = EcSensorParams()) -> float:
    """Concentration from the early part of a current transient.

    Fits I = k / sqrt(t) by least squares and inverts the Cottrell equation,
    so a reading is available before the transient has settled.
    """
    data = np.asarray(transient, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or len(data) < 3:
        raise EstimationError("need at least three (t, I) points")
    t, current = data[:, 0], data[:, 1]
    if np.any(t <= 0):
        raise EstimationError("transient times must be positive")
    u = 1.0 / np.sqrt(t)
    if np.ptp(t) == 0:
        raise EstimationError("transient times are all identical")
    k = float(u @ current / (u @ u))
    return k * math.sqrt(math.pi) / (p.n_e * p.F * p.A * math.sqrt(p.D_k))


@dataclass(frozen=True)
class SensorReading:
    value: float
    raw: float
    timestamp: float
    temperature: float
    humidity: float
    sensor_id: str
    sensor_kind: SensorKind


@dataclass
class Sensor:
    """One physical sensor and its internal response state."""

    params: MoxSensorParams | EcSensorParams
    sensor_id: str = "s0"
    powered_on_at: float = 0.0
    zero_time: float = 0.0
    level: float = 0.0
    last_time: float | None = None

    @property
    def kind(self) -> SensorKind:
        return SensorKind.MOX if isinstance(self.params, MoxSensorParams) else SensorKind.EC

    def ready(self, t: float) -> bool:
        return t - self.powered_on_at >= self.params.warmup_time

    def rezero(self, t: float) -> None:
        """Restart the baseline drift ramp, as after a purge."""
        self.zero_time = t


def make_sensor(kind: SensorKind | str, sensor_id: str = "s0", params=None, powered_on_at: float = 0.0) -> Sensor:
    kind = SensorKind(kind)
    if params is None:
        params = MoxSensorParams() if kind is SensorKind.MOX else EcSensorParams()
    return Sensor(params=params, sensor_id=sensor_id, powered_on_at=powered_on_at, zero_time=powered_on_at)


def sample(
    sensor: Sensor,
    true_concentration: float,
    env: Environment,
    t: float,
    rng: np.random.Generator,
) -> SensorReading:
    """Take one reading at time ``t``.

    The response lags the equilibrium for ``true_concentration`` with a
    first-order time constant, picks up multiplicative and additive noise,
    a slow baseline ramp and the environmental sensitivity, and is then
    corrected with the measured temperature and humidity.
    """
    p = sensor.params
    if not sensor.ready(t):
        raise NotReadyError(
            f"sensor {sensor.sensor_id} sampled {t - sensor.powered_on_at:.1f} s after power-on; "
            f"needs {p.warmup_time:.1f} s"
        )
    if sensor.last_time is not None and t < sensor.last_time:
        raise ConfigurationError("sample timestamps must be non-decreasing")

    target = p.equilibrium(true_concentration)
    if sensor.last_time is None:
        sensor.level = target
    else:
        decay = math.exp(-(t - sensor.last_time) / p.response_time_constant)
        sensor.level = target + (sensor.level - target) * decay
    sensor.last_time = t

    value = sensor.level
    if p.noise > 0:
        value *= 1.0 + p.noise * rng.standard_normal()
    if p.noise_floor > 0:
        value += p.noise_floor * rng.standard_normal()
    value += p.drift_rate * (t - sensor.zero_time)
    measured = p.env.apply(value, env)
    corrected = p.env.correct(measured, env)
    return SensorReading(
        value=corrected,
        raw=p.to_raw(measured),
        timestamp=t,
        temperature=env.temperature,
        humidity=env.humidity,
        sensor_id=sensor.sensor_id,
        sensor_kind=sensor.kind,
    )


class DualSample(NamedTuple):
    mean: float
    lower: float
    upper: float


@dataclass
class DualSensorRig:
    """Two sensors of the same kind, read alternately."""

    sensor_a: Sensor
    sensor_b: Sensor
    active: int = 0
    mount_offset: float = 0.1  # m
    latest: list = field(default_factory=lambda: [None, None])
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.sensor_a.kind is not self.sensor_b.kind:
            raise ConfigurationError("both sensors of a rig must be the same kind")

    @property
    def kind(self) -> SensorKind:
        return self.sensor_a.kind

    @property
    def sensors(self) -> tuple[Sensor, Sensor]:
        return self.sensor_a, self.sensor_b

    def rezero(self, t: float) -> None:
        for s in self.sensors:
            s.rezero(t)
        self.latest = [None, None]


def make_rig(kind: SensorKind | str, params=None, powered_on_at: float = 0.0) -> DualSensorRig:
    kind = SensorKind(kind)
    tag = kind.value.lower()
    return DualSensorRig(
        make_sensor(kind, f"{tag}_a", params, powered_on_at),
        make_sensor(kind, f"{tag}_b", params, powered_on_at),
    )


def dual_sample(
    rig: DualSensorRig,
    true_concentration: float,
    env: Environment,
    t: float,
    rng: np.random.Generator,
) -> DualSample:
    """Read the enabled sensor, swap which one is enabled, and summarise the pair.

    Uses the latest reading from each sensor: the mean is the response,
    the smaller and larger readings bound it.
    """
    reading = sample(rig.sensors[rig.active], true_concentration, env, t, rng)
    rig.latest[rig.active] = reading
    rig.history.append(reading)
    rig.active = 1 - rig.active
    values = [r.value for r in rig.latest if r is not None]
    return DualSample(sum(values) / len(values), min(values), max(values))


READING_COLUMNS = ("t", "sensor_id", "kind", "raw", "value", "temp", "rh")


def write_readings_csv(readings: Sequence[SensorReading], path) -> None:
    """Raw reading trace, one row per sample."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(READING_COLUMNS)
        for r in readings:
            w.writerow(
                (f"{r.timestamp:.6f}", r.sensor_id, r.sensor_kind.value, f"{r.raw:.9g}", f"{r.value:.6f}",
                 f"{r.temperature:.2f}", f"{r.humidity:.2f}")
            )
