"""Odour field: a point source shedding Gaussian puffs into a gusty wind.

Each puff is released at the source, carried by the wind, spreads as
sigma^2 = sigma0^2 + 2 D age and loses mass at ``decay_rate``. Summed over
puffs this is the time-dependent advection-diffusion solution for a finite
source, cheap enough to query thousands of times per trial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

DETECTION_FLOOR = 1e-6


@dataclass(frozen=True)
class Environment:
    temperature: float = 25.0  # degC
    humidity: float = 50.0  # %RH
    pressure: float = 101.325  # kPa, carried but unused

    def __post_init__(self):
        if not 0.0 <= self.humidity <= 100.0:
            raise ConfigurationError("humidity must be within [0, 100] %RH")


@dataclass(frozen=True)
class PlumeParams:
    source_position: tuple[float, float, float] = (-0.55, 0.0, 0.0)
    emission_rate: float = 1.0  # concentration * m^3 / s
    diffusion_coefficient: float = 0.01  # m^2/s
    wind_mean: tuple[float, float, float] = (0.0, 0.05, 0.0)  # m/s
    wind_gust_scale: float = 0.01  # m/s, stationary std of each gust component
    wind_reversion_time: float = 10.0  # s
    decay_rate: float = 0.002  # 1/s, applies to puffs and to the source reservoir
    source_size: float = 0.03  # m, initial puff sigma
    puff_interval: float = 0.25  # s
    max_puff_age: float = 600.0  # s
    filament_sigma: float = 0.1  # log-normal intermittency on observed samples
    plume_threshold: float = 2.0  # concentration counted as "in the plume"
    robot_wake_gain: float = 0.0  # m/s of wind kick per m/s of effector speed

    def __post_init__(self):
        if self.emission_rate < 0:
            raise ConfigurationError("emission_rate must be >= 0")
        if self.diffusion_coefficient <= 0:
            raise ConfigurationError("diffusion_coefficient must be > 0")
        if self.decay_rate < 0:
            raise ConfigurationError("decay_rate must be >= 0")
        if self.source_size <= 0 or self.puff_interval <= 0:
            raise ConfigurationError("source_size and puff_interval must be > 0")


@dataclass(frozen=True)
class PlumeState:
    params: PlumeParams
    elapsed_time: float = 0.0
    current_wind: np.ndarray = field(default_factory=lambda: np.zeros(3))
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    ages: np.ndarray = field(default_factory=lambda: np.zeros(0))
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    emitting: bool = True
    since_release: float = 0.0

    @property
    def source(self) -> np.ndarray:
        return np.asarray(self.params.source_position, dtype=float)


def purged(params: PlumeParams) -> PlumeState:
    """A field with no odour in it and the wind at its mean."""
    return PlumeState(params=params, current_wind=np.asarray(params.wind_mean, dtype=float))


def _puff_sigma2(state: PlumeState) -> np.ndarray:
    p = state.params
    return p.source_size**2 + 2.0 * p.diffusion_coefficient * state.ages


def concentration_at(state: PlumeState, point) -> float:
    """Noise-free concentration at ``point``."""
    if state.masses.size == 0:
        return 0.0
    s2 = _puff_sigma2(state)
    d2 = np.sum((state.positions - np.asarray(point, dtype=float)) ** 2, axis=1)
    dens = state.masses * (2.0 * math.pi * s2) ** -1.5 * np.exp(-0.5 * d2 / s2)
    return float(np.sum(dens))


def concentration_grid(state: PlumeState, points: np.ndarray) -> np.ndarray:
    """Vectorised :func:`concentration_at` over an (N, 3) array of points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if state.masses.size == 0:
        return np.zeros(len(points))
    s2 = _puff_sigma2(state)
    d2 = np.sum((points[:, None, :] - state.positions[None, :, :]) ** 2, axis=2)
    return np.sum(state.masses * (2.0 * math.pi * s2) ** -1.5 * np.exp(-0.5 * d2 / s2), axis=1)


def observe(state: PlumeState, point, rng: np.random.Generator) -> float:
    """Concentration as a sensor inlet sees it: the field times log-normal filament noise."""
    c = concentration_at(state, point)
    s = state.params.filament_sigma
    if s <= 0 or c == 0.0:
        return c
    return c * math.exp(s * rng.standard_normal() - 0.5 * s * s)


def _substep(state: PlumeState, h: float, rng: np.random.Generator, kick: np.ndarray) -> PlumeState:
    p = state.params
    wind = state.current_wind + kick
    positions = state.positions + wind * h
    ages = state.ages + h
    masses = state.masses * math.exp(-p.decay_rate * h)

    since = state.since_release + h
    if state.emitting and p.emission_rate > 0 and since >= p.puff_interval - 1e-12:
        reservoir = math.exp(-p.decay_rate * (state.elapsed_time + h))
        released = p.emission_rate * since * reservoir
        # New puff sits half an interval downwind of the source, as if emitted mid-interval.
        positions = np.vstack([positions, state.source + wind * 0.5 * since])
        ages = np.append(ages, 0.5 * since)
        masses = np.append(masses, released)
        since = 0.0

    keep = ages <= p.max_puff_age
    if not np.all(keep):
        positions, ages, masses = positions[keep], ages[keep], masses[keep]

    mean = np.asarray(p.wind_mean, dtype=float)
    w = state.current_wind
    if p.wind_gust_scale > 0:
        theta = 1.0 / p.wind_reversion_time
        a = math.exp(-theta * h)
        w = mean + (w - mean) * a + p.wind_gust_scale * math.sqrt(1.0 - a * a) * rng.standard_normal(3)
    else:
        w = mean.copy()

    return replace(
        state,
        elapsed_time=state.elapsed_time + h,
        current_wind=w,
        positions=positions,
        ages=ages,
        masses=masses,
        since_release=since,
    )


def step(
    state: PlumeState,
    env: Environment,
    dt: float,
    rng: np.random.Generator,
    effector_speed: float = 0.0,
    effector_heading=None,
) -> PlumeState:
    """Advance the field by ``dt`` seconds.

    ``env`` is accepted for interface symmetry; temperature and humidity act
    on the sensors, not the field. A non-zero ``robot_wake_gain`` adds a wind
    kick along ``effector_heading`` proportional to ``effector_speed``.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    kick = np.zeros(3)
    gain = state.params.robot_wake_gain
    if gain and effector_speed and effector_heading is not None:
        heading = np.asarray(effector_heading, dtype=float)
        norm = np.linalg.norm(heading)
        if norm > 0:
            kick = gain * effector_speed * heading / norm
    h_max = state.params.puff_interval
    n = max(1, int(math.ceil(dt / h_max - 1e-9)))
    h = dt / n
    for _ in range(n):
        state = _substep(state, h, rng, kick)
    return state


def stop_emission(state: PlumeState) -> PlumeState:
    return replace(state, emitting=False)


def purge_and_develop(
    params: PlumeParams,
    develop_time: float = 30.0,
    rng: np.random.Generator | None = None,
    env: Environment = Environment(),
) -> PlumeState:
    """Clear the room, then let the source develop a plume for ``develop_time`` seconds."""
    if develop_time < 0:
        raise ConfigurationError("develop_time must be >= 0")
    if rng is None:
        rng = np.random.default_rng()
    state = purged(params)
    if develop_time > 0:
        state = step(state, env, develop_time, rng)
    return state
