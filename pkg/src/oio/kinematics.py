"""Five-joint arm: forward kinematics, jerk-limited joint motion, encoder drift.

Angles are in degrees throughout. The chain is

    base (yaw about z) -> radial offset l1 -> shoulder (pitch) -> l2
    -> elbow (pitch) -> l3 -> wrist_tilt (pitch) -> l4 -> wrist_roll

so at the zero pose every link lies along +x and the effector sits at
(l1 + l2 + l3 + l4, 0, 0). Wrist roll spins the sensor board about its own
axis and does not move the effector point.

The firmware's view of each joint (the encoder count, ``ArmState.angle``)
evolves deterministically under the commanded motion. The physical joint
slips away from that count by a random walk (``drift_offset``); the true
effector is ``forward_kinematics(angle + drift_offset)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError


class JointId(enum.IntEnum):
    BASE = 0
    SHOULDER = 1
    ELBOW = 2
    WRIST_TILT = 3
    WRIST_ROLL = 4


JOINTS: tuple[JointId, ...] = tuple(JointId)
N_JOINTS = len(JOINTS)

DEFAULT_LINKS = (0.2, 0.3, 0.3, 0.1)

# Degrees-of-freedom configurations: which joints are allowed to move.
DOF_MASKS: dict[int, tuple[bool, ...]] = {
    1: (True, False, False, False, False),
    2: (True, True, False, False, False),
    3: (True, True, True, False, False),
    5: (True, True, True, True, True),
}


@dataclass(frozen=True)
class MotionLimits:
    velocity: float = 10.0  # deg/s
    acceleration: float = 700.0  # deg/s^2
    jerk: float = 300.0  # deg/s^3

    def __post_init__(self):
        if min(self.velocity, self.acceleration, self.jerk) <= 0:
            raise ConfigurationError("motion limits must be strictly positive")


@dataclass(frozen=True)
class EncoderDriftModel:
    """Per-joint drift rates in deg/s^2, ordered base..wrist_roll."""

    rates: tuple[float, ...] = (2e-2, 1e-2, 3e-3, 1e-3, 1e-3)
    noise_scale: float = 1.0

    def __post_init__(self):
        if len(self.rates) != N_JOINTS:
            raise ConfigurationError("need one drift rate per joint")
        if any(r < 0 for r in self.rates) or self.noise_scale < 0:
            raise ConfigurationError("drift rates must be non-negative")

    @classmethod
    def disabled(cls) -> "EncoderDriftModel":
        return cls(rates=(0.0,) * N_JOINTS)

    @property
    def sigma(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float) * self.noise_scale


@dataclass(frozen=True)
class JointState:
    angle: float
    angular_velocity: float
    angular_acceleration: float
    angular_jerk: float


@dataclass(frozen=True)
class EffectorPose:
    x: float
    y: float
    z: float
    azimuth: float
    elevation: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.azimuth, self.elevation])


def wrap_degrees(angle):
    """Wrap to [-180, 180)."""
    return (np.asarray(angle) + 180.0) % 360.0 - 180.0


def _as_angle_array(joints) -> np.ndarray:
    if isinstance(joints, Mapping):
        missing = [j.name.lower() for j in JOINTS if j not in joints and j.name.lower() not in joints]
        if missing:
            raise ConfigurationError(f"missing joint angles: {', '.join(missing)}")
        return np.array([float(joints[j] if j in joints else joints[j.name.lower()]) for j in JOINTS])
    arr = np.asarray(joints, dtype=float)
    if arr.shape != (N_JOINTS,):
        raise ConfigurationError(f"expected {N_JOINTS} joint angles, got shape {arr.shape}")
    return arr


def _check_links(link_lengths) -> tuple[float, float, float, float]:
    links = tuple(float(v) for v in link_lengths)
    if len(links) != 4 or any(v <= 0 for v in links):
        raise ConfigurationError("link_lengths must be four positive lengths")
    return links  # type: ignore[return-value]


def _chain(angles: np.ndarray, links) -> tuple[float, float, float, float, float]:
    l1, l2, l3, l4 = links
    psi = math.radians(angles[0])
    p1 = math.radians(angles[1])
    p12 = p1 + math.radians(angles[2])
    p123 = p12 + math.radians(angles[3])
    r = l1 + l2 * math.cos(p1) + l3 * math.cos(p12) + l4 * math.cos(p123)
    z = l2 * math.sin(p1) + l3 * math.sin(p12) + l4 * math.sin(p123)
    return psi, r, z, p123, 0.0


def forward_kinematics(joints, link_lengths=DEFAULT_LINKS) -> EffectorPose:
    """Effector position and pointing direction for the given joint angles.

    ``joints`` may be a mapping keyed by :class:`JointId` (or lower-case
    joint names) or a length-5 sequence in chain order.
    """
    angles = _as_angle_array(joints)
    links = _check_links(link_lengths)
    psi, r, z, pitch, _ = _chain(angles, links)
    x, y = r * math.cos(psi), r * math.sin(psi)
    # Hand direction; azimuth/elevation taken from it so elevation stays in [-90, 90].
    hx = math.cos(pitch) * math.cos(psi)
    hy = math.cos(pitch) * math.sin(psi)
    hz = math.sin(pitch)
    if math.hypot(hx, hy) < 1e-12:
        azimuth = float(wrap_degrees(angles[0]))
    else:
        azimuth = float(wrap_degrees(math.degrees(math.atan2(hy, hx))))
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, hz))))
    return EffectorPose(x, y, z, azimuth, elevation)


def position_jacobian(angles, link_lengths=DEFAULT_LINKS) -> np.ndarray:
    """3x5 derivative of effector position (m) with respect to joint angles (deg)."""
    angles = np.asarray(angles, dtype=float)
    l1, l2, l3, l4 = _check_links(link_lengths)
    psi = math.radians(angles[0])
    p1 = math.radians(angles[1])
    p12 = p1 + math.radians(angles[2])
    p123 = p12 + math.radians(angles[3])
    r = l1 + l2 * math.cos(p1) + l3 * math.cos(p12) + l4 * math.cos(p123)
    c, s = math.cos(psi), math.sin(psi)

    # In-plane partials of (r, z) for the three pitch joints, per radian.
    dr = [
        -(l2 * math.sin(p1) + l3 * math.sin(p12) + l4 * math.sin(p123)),
        -(l3 * math.sin(p12) + l4 * math.sin(p123)),
        -(l4 * math.sin(p123)),
    ]
    dz = [
        l2 * math.cos(p1) + l3 * math.cos(p12) + l4 * math.cos(p123),
        l3 * math.cos(p12) + l4 * math.cos(p123),
        l4 * math.cos(p123),
    ]
    J = np.zeros((3, N_JOINTS))
    J[:, 0] = (-r * s, r * c, 0.0)
    for k in range(3):
        J[:, k + 1] = (dr[k] * c, dr[k] * s, dz[k])
    return J * (math.pi / 180.0)


@dataclass(frozen=True)
class ArmState:
    """Joint kinematics as tracked by the encoders, plus the physical slip.

    Arrays are indexed by :class:`JointId`.
    """

    angle: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    jerk: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    drift_offset: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    drift_velocity: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    link_lengths: tuple[float, ...] = DEFAULT_LINKS
    active: tuple[bool, ...] = DOF_MASKS[5]
    clamp_count: int = 0

    @classmethod
    def at_rest(cls, angles, link_lengths=DEFAULT_LINKS, dof: int = 5) -> "ArmState":
        if dof not in DOF_MASKS:
            raise ConfigurationError(f"unsupported DoF configuration {dof}")
        return cls(
            angle=_as_angle_array(angles).copy(),
            link_lengths=_check_links(link_lengths),
            active=DOF_MASKS[dof],
        )

    @property
    def true_angle(self) -> np.ndarray:
        return self.angle + self.drift_offset

    @property
    def reported_angle(self) -> np.ndarray:
        return self.angle

    @property
    def effector(self) -> EffectorPose:
        return forward_kinematics(self.true_angle, self.link_lengths)

    @property
    def reported_effector(self) -> EffectorPose:
        return forward_kinematics(self.angle, self.link_lengths)

    def joint(self, joint_id: JointId) -> JointState:
        j = int(joint_id)
        return JointState(
            float(self.angle[j]),
            float(self.velocity[j]),
            float(self.acceleration[j]),
            float(self.jerk[j]),
        )

    @property
    def joints(self) -> dict[JointId, JointState]:
        return {j: self.joint(j) for j in JOINTS}


def step_motion(
    state: ArmState,
    command: Sequence[float],
    dt: float,
    limits: MotionLimits = MotionLimits(),
) -> ArmState:
    """Advance joint motion by ``dt`` toward the commanded accelerations.

    Jerk slews acceleration toward the command and saturates at
    ``limits.jerk``; acceleration and velocity saturate at their limits.
    Once a joint is at its velocity limit, commands pushing it further are
    treated as zero acceleration. Angles and velocities use trapezoidal
    integration.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    cmd = np.where(state.active, np.asarray(command, dtype=float), 0.0)
    clamps = int(np.count_nonzero(np.abs(cmd) > limits.acceleration))
    cmd = np.clip(cmd, -limits.acceleration, limits.acceleration)

    v0, a0 = state.velocity, state.acceleration
    pushing = (np.abs(v0) >= limits.velocity) & (np.sign(cmd) == np.sign(v0))
    target = np.where(pushing, 0.0, cmd)

    jerk = np.clip((target - a0) / dt, -limits.jerk, limits.jerk)
    a1 = np.clip(a0 + jerk * dt, -limits.acceleration, limits.acceleration)
    v1 = v0 + 0.5 * (a0 + a1) * dt
    over = np.abs(v1) > limits.velocity
    clamps += int(np.count_nonzero(over & (np.abs(v0) < limits.velocity)))
    v1 = np.clip(v1, -limits.velocity, limits.velocity)
    q1 = state.angle + 0.5 * (v0 + v1) * dt

    return replace(
        state,
        angle=q1,
        velocity=v1,
        acceleration=a1,
        jerk=jerk,
        clamp_count=state.clamp_count + clamps,
    )


def apply_encoder_drift(
    state: ArmState,
    model: EncoderDriftModel,
    dt: float,
    rng: np.random.Generator,
) -> ArmState:
    """Random-walk the physical joint angle away from the encoder count.

    Each call draws an acceleration-level disturbance with standard deviation
    equal to the joint's drift rate, integrates it over ``dt`` into the drift
    velocity (increment std = rate * dt) and then into the angle offset.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    sigma = model.sigma
    if not np.any(sigma):
        return state
    dv = sigma * dt * rng.standard_normal(N_JOINTS)
    v1 = state.drift_velocity + dv
    offset = state.drift_offset + 0.5 * (state.drift_velocity + v1) * dt
    return replace(state, drift_offset=offset, drift_velocity=v1)


# --------------------------------------------------------------------------
# Cartesian actions


class Direction(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"
    FORWARD = "forward"
    BACKWARD = "backward"
    STAY = "stay"


OPPOSITE = {
    Direction.LEFT: Direction.RIGHT,
    Direction.RIGHT: Direction.LEFT,
    Direction.UP: Direction.DOWN,
    Direction.DOWN: Direction.UP,
    Direction.FORWARD: Direction.BACKWARD,
    Direction.BACKWARD: Direction.FORWARD,
    Direction.STAY: Direction.STAY,
}


@dataclass(frozen=True)
class Envelope:
    """Reachable region for effector targets.

    ``max_reach`` is measured from the shoulder joint; ``min_radius`` is the
    horizontal distance from the base axis.
    """

    max_reach: float = 0.7
    min_radius: float = 0.25
    z_min: float = -0.35
    z_max: float = 0.55

    def clamp(self, point: np.ndarray, azimuth_deg: float, links=DEFAULT_LINKS) -> tuple[np.ndarray, bool]:
        p = np.array(point, dtype=float)
        clamped = False
        psi = math.radians(azimuth_deg)
        r = math.hypot(p[0], p[1])
        if r < self.min_radius:
            if r < 1e-9:
                p[0], p[1] = self.min_radius * math.cos(psi), self.min_radius * math.sin(psi)
            else:
                p[:2] *= self.min_radius / r
            clamped = True
        if not self.z_min <= p[2] <= self.z_max:
            p[2] = min(max(p[2], self.z_min), self.z_max)
            clamped = True
        r = math.hypot(p[0], p[1])
        shoulder = np.array([links[0] * p[0] / r, links[0] * p[1] / r, 0.0])
        reach = p - shoulder
        d = float(np.linalg.norm(reach))
        if d > self.max_reach:
            p = shoulder + reach * (self.max_reach / d)
            clamped = True
        return p, clamped


def direction_vector(direction: Direction, base_angle_deg: float) -> np.ndarray:
    """Unit vector of a move in the base-aligned frame at the effector.

    Forward/backward are radial, left/right tangential (left is
    counter-clockwise seen from above), up/down vertical.
    """
    psi = math.radians(base_angle_deg)
    radial = np.array([math.cos(psi), math.sin(psi), 0.0])
    tangential = np.array([-math.sin(psi), math.cos(psi), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    return {
        Direction.FORWARD: radial,
        Direction.BACKWARD: -radial,
        Direction.LEFT: tangential,
        Direction.RIGHT: -tangential,
        Direction.UP: up,
        Direction.DOWN: -up,
        Direction.STAY: np.zeros(3),
    }[direction]


def dls_solve(J: np.ndarray, dx: np.ndarray, damping: float = 1e-3) -> np.ndarray:
    """Damped least-squares joint step for a Cartesian displacement."""
    JJt = J @ J.T
    return J.T @ np.linalg.solve(JJt + damping**2 * np.eye(JJt.shape[0]), dx)


def cartesian_step(
    state: ArmState,
    direction: Direction,
    magnitude: float,
    period: float = 1.0,
    envelope: Envelope = Envelope(),
    limits: MotionLimits = MotionLimits(),
    damping: float = 1e-3,
) -> tuple[np.ndarray, bool]:
    """Joint accelerations that move the effector ``magnitude`` metres along ``direction``.

    The command is the constant acceleration of a rest-to-rest bang-bang
    profile over ``period`` seconds, so the intended joint displacement is
    ``command * period**2 / 4``. Planned from the encoder angles. Returns
    ``(command, at_envelope)``.
    """
    direction = Direction(direction)
    if direction is Direction.STAY or magnitude == 0:
        return np.zeros(N_JOINTS), False
    q = state.angle
    here = forward_kinematics(q, state.link_lengths).position
    goal = here + magnitude * direction_vector(direction, q[0])
    goal, at_envelope = envelope.clamp(goal, q[0], state.link_lengths)
    J = position_jacobian(q, state.link_lengths) * np.asarray(state.active, dtype=float)
    dq = dls_solve(J, goal - here, damping)
    # Keep the step executable within one period at the velocity limit.
    cap = 0.95 * limits.velocity * period
    peak = float(np.max(np.abs(dq)))
    if peak > cap:
        dq *= cap / peak
    return 4.0 * dq / period**2, at_envelope


# --------------------------------------------------------------------------
# Executing commands


SERVO_BRAKE = 15.0  # deg/s^2 used to shape the approach velocity
SERVO_GAIN = 10.0  # 1/s, velocity-error to acceleration


def servo_acceleration(state: ArmState, target: np.ndarray, limits: MotionLimits = MotionLimits()) -> np.ndarray:
    """Acceleration command that brings the encoder angles to ``target``."""
    err = target - state.angle
    v_des = np.sign(err) * np.minimum(limits.velocity, np.sqrt(2.0 * SERVO_BRAKE * np.abs(err)))
    return np.clip(SERVO_GAIN * (v_des - state.velocity), -limits.acceleration, limits.acceleration)


def command_target(state: ArmState, command: Sequence[float], period: float = 1.0) -> np.ndarray:
    return state.angle + np.asarray(command, dtype=float) * period**2 / 4.0


def execute_command(
    state: ArmState,
    command: Sequence[float],
    period: float = 1.0,
    dt: float = 0.01,
    limits: MotionLimits = MotionLimits(),
    drift: EncoderDriftModel | None = None,
    rng: np.random.Generator | None = None,
) -> ArmState:
    """Run one action period: servo toward the command's displacement, with optional drift."""
    target = command_target(state, command, period)
    n = int(round(period / dt))
    for _ in range(n):
        state = step_motion(state, servo_acceleration(state, target, limits), dt, limits)
        if drift is not None:
            state = apply_encoder_drift(state, drift, dt, rng)
    return state


def dead_reckon(
    command_history: Iterable[Sequence[float]],
    initial: ArmState,
    period: float = 1.0,
    dt: float = 0.01,
    limits: MotionLimits = MotionLimits(),
) -> list[EffectorPose]:
    """Open-loop effector track from replaying the commands without drift.

    ``initial`` supplies the encoder joint configuration the history started
    from (an effector pose alone does not pin down a redundant arm). Returns
    the initial pose followed by one pose per command.
    """
    state = replace(initial, drift_offset=np.zeros(N_JOINTS), drift_velocity=np.zeros(N_JOINTS))
    track = [state.reported_effector]
    for command in command_history:
        state = execute_command(state, command, period, dt, limits)
        track.append(state.reported_effector)
    return track
