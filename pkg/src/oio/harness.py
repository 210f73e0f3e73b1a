"""Trial runner: composes plume, arm, sensors, filter and policy into timed trials.

A trial purges the room, lets the plume develop, fast-forwards sensor
warm-up, captures five baseline samples at the start pose and then runs the
one-second sense/decide/act loop until the sensor is within the success
radius of the source or the timeout expires.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .belief_map import (
    WINDOW_SIZE,
    RadiusCalibration,
    SphereWindow,
    sphere_from_reading,
    to_rssi,
    update_window_and_target,
)
from .bout import BoutSignal, detect, init_baseline
from .errors import ConfigurationError
from .fusion import best_landmark, new_ekf, predict, sync_landmarks, update, upsert_landmark
from .kinematics import (
    DEFAULT_LINKS,
    ArmState,
    Direction,
    EncoderDriftModel,
    Envelope,
    MotionLimits,
    apply_encoder_drift,
    cartesian_step,
    command_target,
    forward_kinematics,
    servo_acceleration,
    step_motion,
    wrap_degrees,
)
from .navigation import (
    GradientFollower,
    GreedyQPolicy,
    GridOdourEnv,
    GridSpec,
    MOVES,
    QTable,
    RlHyperparams,
    best_move,
    train,
)
from .plume import Environment, PlumeParams, concentration_at, observe, purge_and_develop
from .plume import step as plume_step
from .sensors import EcSensorParams, MoxSensorParams, SensorKind, dual_sample, make_rig

log = logging.getLogger(__name__)

ALGORITHMS = ("gradient", "belief_map", "rl")
ALGORITHM_ALIASES = {"belief": "belief_map"}
TRACE_SCHEMA = 1
TRACE_COLUMNS = ("t", "x", "y", "z", "reading", "rssi", "action", "in_plume")
SPHERE_COLUMNS = (
    "t", "cx", "cy", "cz", "radius", "radius_lower", "radius_upper",
    "window", "target_x", "target_y", "target_z", "target_source",
)
SUMMARY_COLUMNS = (
    "algorithm", "sensor", "trials", "successes", "success_rate", "mean_time_s", "std_time_s",
    "min_time_s", "max_time_s",
)

# Landmark covariance (m^2 per axis) by how the candidate was obtained.
STEER_TO_LANDMARK = False
MIN_PROGRESS = 0.1  # of step_length; smaller lookahead gains hand over to the follower
HOLD_WHILE_RISING = True
PLANAR_THICKNESS = 0.01  # m; rms spread below which window centres count as coplanar
CANDIDATE_VARIANCE = {"vertex": 0.03**2, "point": 0.05**2, "pair": 0.08**2, "circle": 0.15**2}


@dataclass(frozen=True)
class TrialConfig:
    algorithm: str = "gradient"
    sensor_kind: SensorKind = SensorKind.MOX
    timeout: float = 60.0
    success_radius: float = 0.10
    trials: int = 5
    develop_time: float = 30.0
    seed: int = 0
    plume: PlumeParams = field(default_factory=PlumeParams)
    environment: Environment = field(default_factory=Environment)
    mox: MoxSensorParams = field(default_factory=MoxSensorParams)
    ec: EcSensorParams = field(default_factory=EcSensorParams)
    start_angles: tuple[float, ...] = (0.0, 65.38, -130.76, 65.38, 0.0)  # effector at (0.55, 0, 0)
    link_lengths: tuple[float, ...] = DEFAULT_LINKS
    dof: int = 5
    limits: MotionLimits = field(default_factory=MotionLimits)
    drift: EncoderDriftModel = field(default_factory=EncoderDriftModel)
    envelope: Envelope = field(default_factory=lambda: Envelope(max_reach=0.4, min_radius=0.5, z_min=-0.02, z_max=0.02))
    action_period: float = 1.0
    samples_per_action: int = 5
    motion_dt: float = 0.01
    step_length: float = 0.1  # m commanded per action
    blocked_fraction: float = 0.25  # moves the envelope shrinks below this share of a step count as failed
    baseline_samples: int = 5
    smoothing_window: int = 5
    baseline_rule: str = "max"
    in_plume_factor: float = 1.5
    probe_distance: float = 0.3  # m, radius calibration probe
    pose_sigma: tuple[float, float] = (0.003, 0.3)  # m, deg of the absolute pose fix
    grid: GridSpec = field(default_factory=GridSpec)
    rl: RlHyperparams = field(default_factory=RlHyperparams)
    rl_algorithm: str = "expected_sarsa"
    rl_retrain_per_trial: bool = True
    q_table: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", ALGORITHM_ALIASES.get(self.algorithm, self.algorithm))
        kind = self.sensor_kind
        try:
            kind = kind if isinstance(kind, SensorKind) else SensorKind(str(kind).upper())
        except ValueError:
            raise ConfigurationError(f"unknown sensor kind {self.sensor_kind!r}") from None
        object.__setattr__(self, "sensor_kind", kind)
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")
        if self.success_radius <= 0:
            raise ConfigurationError("success_radius must be positive")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.develop_time < 0:
            raise ConfigurationError("develop_time must be >= 0")
        if self.action_period <= 0 or self.motion_dt <= 0:
            raise ConfigurationError("action_period and motion_dt must be positive")
        if self.samples_per_action < 1 or self.baseline_samples < 1:
            raise ConfigurationError("samples_per_action and baseline_samples must be >= 1")
        if self.baseline_samples != self.smoothing_window:
            raise ConfigurationError("the baseline must fill exactly one smoothing window")
        sub = self.action_period / self.samples_per_action / self.motion_dt
        if abs(sub - round(sub)) > 1e-9:
            raise ConfigurationError("motion_dt must divide the sample interval")
        if len(self.start_angles) != 5:
            raise ConfigurationError("start_angles needs five joint angles")
        if self.step_length <= 0:
            raise ConfigurationError("step_length must be positive")
        if not 0 <= self.blocked_fraction < 1:
            raise ConfigurationError("blocked_fraction must be in [0, 1)")
        if self.in_plume_factor <= 0:
            raise ConfigurationError("in_plume_factor must be positive")

    @property
    def sample_interval(self) -> float:
        return self.action_period / self.samples_per_action

    @property
    def sensor_params(self) -> MoxSensorParams | EcSensorParams:
        return self.mox if self.sensor_kind is SensorKind.MOX else self.ec

    @property
    def source(self) -> np.ndarray:
        return np.asarray(self.plume.source_position, dtype=float)

    def start_arm(self) -> ArmState:
        return ArmState.at_rest(self.start_angles, self.link_lengths, self.dof)


@dataclass(frozen=True)
class TrialResult:
    success: bool
    time_to_locate: float
    trace: tuple  # rows of TRACE_COLUMNS
    readings: tuple  # raw dual-sensor mean behind each trace row, before smoothing
    spheres: tuple  # rows of SPHERE_COLUMNS
    trajectory: np.ndarray  # (n, 4): t, x, y, z of the true effector at each sample
    estimate: np.ndarray  # (n_actions + 1, 4): t, x, y, z of the filtered pose
    dead_reckoning: np.ndarray  # same layout, open-loop encoder pose
    peak_motion: tuple[float, float, float]  # largest |velocity|, |acceleration|, |jerk|
    events: dict


@dataclass(frozen=True)
class ExperimentSummary:
    algorithm: str
    sensor: str
    trials: int
    successes: int
    mean_time: float
    std_time: float
    min_time: float
    max_time: float
    times: tuple[float, ...]  # NaN for trials that timed out

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def row(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "sensor": self.sensor,
            "trials": self.trials,
            "successes": self.successes,
            "success_rate": round(self.success_rate, 4),
            "mean_time_s": round(self.mean_time, 1),
            "std_time_s": round(self.std_time, 1),
            "min_time_s": round(self.min_time, 1),
            "max_time_s": round(self.max_time, 1),
        }


# --------------------------------------------------------------------------
# Seeds and the trained table


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index`` of master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _stream(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=key)


def training_env(cfg: TrialConfig, trial_index: int = 0) -> GridOdourEnv:
    """Lattice task matching ``cfg``; its plume snapshots depend on the seed (and trial when retraining)."""
    key = (trial_index, 2) if cfg.rl_retrain_per_trial else (2**31 - 1, 2)
    return GridOdourEnv(
        plume=cfg.plume,
        start=cfg.start_arm().effector.position,
        grid=cfg.grid,
        envelope=cfg.envelope,
        step_length=cfg.step_length,
        max_turn_deg=0.95 * cfg.limits.velocity * cfg.action_period,
        success_radius=cfg.success_radius,
        develop_time=cfg.develop_time,
        in_plume_factor=cfg.in_plume_factor,
        seed=int(_stream(cfg.seed, *key).generate_state(1)[0]),
    )


@functools.lru_cache(maxsize=128)
def _trained(cfg: TrialConfig, trial_index: int) -> tuple[QTable, np.ndarray]:
    key = (trial_index, 1) if cfg.rl_retrain_per_trial else (2**31 - 1, 1)
    return train(training_env(cfg, trial_index), cfg.rl, cfg.rl_algorithm, np.random.default_rng(_stream(cfg.seed, *key)))


def trained_table(cfg: TrialConfig, trial_index: int = 0) -> tuple[QTable, np.ndarray | None]:
    """The table an RL trial deploys: loaded from ``cfg.q_table`` or trained on the lattice.

    With ``rl_retrain_per_trial`` every trial gets its own agent, trained on
    its own stream; otherwise one agent serves the whole experiment. Tables
    do not depend on the sensor, so both sensor kinds share them.
    """
    if cfg.q_table is not None:
        q, _ = QTable.load(cfg.q_table)
        return q, None
    key = replace(cfg, algorithm="rl", sensor_kind=SensorKind.MOX, trials=1, timeout=60.0)
    return _trained(key, trial_index if cfg.rl_retrain_per_trial else 0)


# --------------------------------------------------------------------------
# Controllers


class _Controller:
    def __init__(self, cfg: TrialConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.follower = GradientFollower()
        self.fallbacks = 0

    def decide(self, t, est_position, est_azimuth, sig, rssi_trend, last_action, dual, preview=None) -> Direction:
        """Next move. ``preview(move)`` gives the planned effector displacement of a move."""
        return self.follower.act(sig, rssi_trend, last_action, self.rng)

    def blocked(self, action: Direction, sig: BoutSignal) -> Direction:
        """Replacement for a move the envelope stops; counted as a failed move."""
        self.fallbacks += 1
        return self.follower.act(BoutSignal(sig.smoothed, 0.0, False), (), action, self.rng)


def _improving(sig: BoutSignal, rssi_trend, last_action) -> bool:
    rising = len(rssi_trend) >= 2 and rssi_trend[-1] > rssi_trend[-2]
    return last_action is not None and last_action is not Direction.STAY and (sig.toward_source or rising)


def _flat_normal(window: SphereWindow, thickness: float = PLANAR_THICKNESS) -> np.ndarray | None:
    """Normal of the plane holding the window's centres, if they are that flat."""
    if len(window) < 3:
        return None
    c = np.array([sp.center for sp in window.spheres])
    _, sv, vt = np.linalg.svd(c - c.mean(axis=0))
    return vt[2] if sv[2] / math.sqrt(len(c)) < thickness else None


class _BeliefController(_Controller):
    def __init__(self, cfg, rng, calib: RadiusCalibration):
        super().__init__(cfg, rng)
        self.calib = calib
        self.window = SphereWindow()
        self.target = None
        self.switches = 0
        self.bank: list = []
        self.sphere_rows: list = []

    def decide(self, t, est_position, est_azimuth, sig, rssi_trend, last_action, dual, preview=None):
        sphere = sphere_from_reading(est_position, dual.mean, dual.lower, dual.upper, self.calib, timestamp=t)
        self.window, upd = update_window_and_target(self.window, sphere, rssi_trend, self.target, self.rng)
        self.switches += int(upd.switched)
        self.target = upd.target
        if upd.target is not None:
            # Far readings place their candidates less precisely.
            scale = max(1.0, sphere.radius / self.cfg.probe_distance) ** 2 if sphere is not None else 1.0
            cov = np.eye(3) * CANDIDATE_VARIANCE[upd.source] * scale
            self.bank = upsert_landmark(None, self.bank, upd.target, cov)
        if sphere is not None:
            tgt = upd.target if upd.target is not None else (math.nan,) * 3
            self.sphere_rows.append(
                (t, *sphere.center, sphere.radius, sphere.radius_lower, sphere.radius_upper, len(self.window), *tgt, upd.source)
            )
        if upd.target is None or (HOLD_WHILE_RISING and _improving(sig, rssi_trend, last_action)):
            self.fallbacks += 1
            return self.follower.act(sig, rssi_trend, last_action, self.rng)
        goal = best_landmark(self.bank).position if STEER_TO_LANDMARK else upd.target
        offset = np.asarray(goal) - est_position
        normal = _flat_normal(self.window)
        if normal is not None:
            # Coplanar centres cannot tell a point from its mirror image.
            offset = offset - (offset @ normal) * normal
        gap = float(np.linalg.norm(offset))
        if gap < 0.5 * self.cfg.step_length:
            self.fallbacks += 1
            return self.follower.act(sig, rssi_trend, last_action, self.rng)
        if preview is None:
            return best_move(offset, est_azimuth)
        # Greedy one-step lookahead through the arm's own planner, so moves
        # the envelope or joint limits would swallow are not chosen.
        gaps = [float(np.linalg.norm(offset - preview(a))) for a in MOVES]
        i = int(np.argmin(gaps))
        if gap - gaps[i] < MIN_PROGRESS * self.cfg.step_length:
            self.fallbacks += 1
            return self.follower.act(sig, rssi_trend, last_action, self.rng)
        return MOVES[i]


class _RlController(_Controller):
    def __init__(self, cfg, rng, q: QTable):
        super().__init__(cfg, rng)
        self.policy = GreedyQPolicy(q, cfg.grid, self.follower)

    def decide(self, t, est_position, est_azimuth, sig, rssi_trend, last_action, dual, preview=None):
        action, fell_back = self.policy.act(est_position, sig, rssi_trend, last_action, self.rng)
        self.fallbacks += int(fell_back)
        return action

    def blocked(self, action, sig):
        self.policy.hand_over()
        return super().blocked(action, sig)


def radius_calibration(cfg: TrialConfig, plume) -> RadiusCalibration:
    """Noise-free probe reading at ``probe_distance`` from the source, toward the base."""
    src = cfg.source
    toward = -src / max(float(np.linalg.norm(src)), 1e-12)
    c = concentration_at(plume, src + cfg.probe_distance * toward)
    value = cfg.sensor_params.equilibrium(c)
    return RadiusCalibration.from_probe(cfg.probe_distance, value)


# --------------------------------------------------------------------------
# One trial


def _planned_move(arm: ArmState, action: Direction, cfg: TrialConfig) -> np.ndarray:
    command, _ = cartesian_step(arm, action, cfg.step_length, cfg.action_period, cfg.envelope, cfg.limits)
    goal = command_target(arm, command, cfg.action_period)
    return forward_kinematics(goal, arm.link_lengths).position - arm.reported_effector.position


def _planned_shift(arm: ArmState, command, cfg: TrialConfig) -> float:
    goal = command_target(arm, command, cfg.action_period)
    return float(np.linalg.norm(forward_kinematics(goal, arm.link_lengths).position - arm.reported_effector.position))


def run_trial(cfg: TrialConfig, rng: np.random.Generator, q_table: QTable | None = None, trial_index: int = 0) -> TrialResult:
    env = cfg.environment
    params = cfg.sensor_params
    src = cfg.source
    dts = cfg.sample_interval
    substeps = int(round(dts / cfg.motion_dt))
    drift = cfg.drift if any(cfg.drift.rates) else None

    plume = purge_and_develop(cfg.plume, cfg.develop_time, rng, env)
    # Warm-up is fast-forwarded: the sensors were powered on long ago in virtual time.
    baseline_start = -cfg.baseline_samples * dts
    rig = make_rig(cfg.sensor_kind, params, powered_on_at=baseline_start - params.warmup_time)
    rig.rezero(baseline_start)
    arm = cfg.start_arm()

    trace: list = []
    raw: list = []
    trajectory: list = []

    def sense(t, arm, plume):
        pos = arm.effector.position
        c_true = concentration_at(plume, pos)
        ds = dual_sample(rig, observe(plume, pos, rng), env, t, rng)
        return pos, c_true, ds

    baseline = []
    for i in range(cfg.baseline_samples):
        t = round(baseline_start + (i + 1) * dts, 9)
        plume = plume_step(plume, env, dts, rng)
        pos, c_true, ds = sense(t, arm, plume)
        baseline.append(ds.mean)
        raw.append(ds.mean)
        trace.append((t, *pos, ds.mean, to_rssi(ds.mean), "baseline", c_true > cfg.plume.plume_threshold))
        trajectory.append((t, *pos))
    bout = init_baseline(baseline, cfg.smoothing_window, cfg.baseline_rule)
    in_plume_level = cfg.in_plume_factor * max(bout.baseline)
    sig = BoutSignal(bout.prev_smoothed, 0.0, False)  # nothing to act on before the first move
    last_dual = ds
    rssi_trend = [to_rssi(sig.smoothed)]

    if cfg.algorithm == "belief_map":
        ctrl: _Controller = _BeliefController(cfg, rng, radius_calibration(cfg, plume))
    elif cfg.algorithm == "rl":
        ctrl = _RlController(cfg, rng, q_table if q_table is not None else trained_table(cfg, trial_index)[0])
    else:
        ctrl = _Controller(cfg, rng)

    pose0 = arm.effector.as_vector()
    Rpose = np.diag([cfg.pose_sigma[0] ** 2] * 3 + [cfg.pose_sigma[1] ** 2] * 2)
    ekf = new_ekf(pose0, Rpose.copy(), Rpose * 0.1, {"pose": Rpose})
    estimate = [(0.0, *ekf.position)]
    dr_track = [(0.0, *arm.reported_effector.position)]
    dr_pose = arm.reported_effector.as_vector()

    success = bool(np.linalg.norm(arm.effector.position - src) <= cfg.success_radius)
    time_to_locate = 0.0 if success else cfg.timeout
    last_action: Direction | None = None
    peaks = np.zeros(3)
    envelope_hits = 0
    n_actions = int(math.ceil(cfg.timeout / cfg.action_period - 1e-9))

    for k in range(n_actions):
        if success:
            break
        t0 = k * cfg.action_period
        est_pos = ekf.position
        est_az = float(ekf.mean[3])
        action = ctrl.decide(t0, est_pos, est_az, sig, rssi_trend, last_action, last_dual, functools.partial(_planned_move, arm, cfg=cfg))
        command, at_env = cartesian_step(arm, action, cfg.step_length, cfg.action_period, cfg.envelope, cfg.limits)
        for _ in range(len(Direction)):
            if not (at_env and _planned_shift(arm, command, cfg) < cfg.blocked_fraction * cfg.step_length):
                break
            envelope_hits += 1
            action = ctrl.blocked(action, sig)
            command, at_env = cartesian_step(arm, action, cfg.step_length, cfg.action_period, cfg.envelope, cfg.limits)
        target = command_target(arm, command, cfg.action_period)
        before = arm.reported_effector.as_vector()
        for s in range(cfg.samples_per_action):
            for _ in range(substeps):
                arm = step_motion(arm, servo_acceleration(arm, target, cfg.limits), cfg.motion_dt, cfg.limits)
                if drift is not None:
                    arm = apply_encoder_drift(arm, drift, cfg.motion_dt, rng)
                peaks = np.maximum(peaks, [np.max(np.abs(arm.velocity)), np.max(np.abs(arm.acceleration)), np.max(np.abs(arm.jerk))])
            t = round(t0 + (s + 1) * dts, 9)
            plume = plume_step(plume, env, dts, rng)
            pos, c_true, ds = sense(t, arm, plume)
            sig = detect(bout, ds.mean)
            last_dual = ds
            raw.append(ds.mean)
            trace.append((t, *pos, sig.smoothed, to_rssi(sig.smoothed), action.value, sig.smoothed > in_plume_level))
            trajectory.append((t, *pos))
            if t > cfg.timeout + 1e-9:
                break
            if np.linalg.norm(pos - src) <= cfg.success_radius:
                success, time_to_locate = True, t
                break
        # Filter: dead-reckoned increment as the prediction, the pose fix as the update.
        after = arm.reported_effector.as_vector()
        delta = after - before
        delta[3] = wrap_degrees(delta[3])
        dr_pose = dr_pose + delta
        ekf = predict(ekf, delta, cfg.action_period)
        fix = arm.effector.as_vector() + rng.standard_normal(5) * np.sqrt(np.diag(Rpose))
        ekf = update(ekf, fix, "pose")
        if cfg.algorithm == "belief_map" and ctrl.bank:
            ekf = sync_landmarks(ekf, ctrl.bank)
        estimate.append((t, *ekf.position))
        dr_track.append((t, *dr_pose[:3]))
        rssi_trend.append(to_rssi(sig.smoothed))
        last_action = action

    events = {
        "clamps": int(arm.clamp_count),
        "rejections": int(ekf.rejections),
        "envelope_hits": envelope_hits,
        "fallbacks": ctrl.fallbacks,
        "target_switches": getattr(ctrl, "switches", 0),
        "landmarks": len(getattr(ctrl, "bank", [])),
    }
    return TrialResult(
        success=success,
        time_to_locate=float(time_to_locate),
        trace=tuple(trace),
        readings=tuple(float(v) for v in raw),
        spheres=tuple(getattr(ctrl, "sphere_rows", [])),
        trajectory=np.asarray(trajectory, dtype=float),
        estimate=np.asarray(estimate, dtype=float),
        dead_reckoning=np.asarray(dr_track, dtype=float),
        peak_motion=tuple(float(v) for v in peaks),
        events=events,
    )


# --------------------------------------------------------------------------
# Experiments


def summarize(cfg: TrialConfig, results: Sequence[TrialResult]) -> ExperimentSummary:
    times = [r.time_to_locate for r in results if r.success]
    mean = float(np.mean(times)) if times else math.nan
    std = float(np.std(times, ddof=1)) if len(times) > 1 else 0.0
    return ExperimentSummary(
        algorithm=cfg.algorithm,
        sensor=cfg.sensor_kind.value,
        trials=len(results),
        successes=len(times),
        mean_time=mean,
        std_time=std,
        min_time=float(min(times)) if times else math.nan,
        max_time=float(max(times)) if times else math.nan,
        times=tuple(r.time_to_locate if r.success else math.nan for r in results),
    )


def run_experiment(cfg: TrialConfig) -> tuple[ExperimentSummary, list[TrialResult]]:
    """Run ``cfg.trials`` independent trials, each on its own purged and redeveloped plume."""
    results = [run_trial(cfg, trial_rng(cfg.seed, k), None, k) for k in range(cfg.trials)]
    return summarize(cfg, results), results


# --------------------------------------------------------------------------
# Reports


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return f"{float(v):.6f}"
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_report(
    experiments: Sequence[tuple[ExperimentSummary, Sequence[TrialResult]]],
    out_dir,
    formats: Sequence[str] = ("csv", "json"),
    learning_curves: dict | None = None,
) -> list[Path]:
    """Write the summary tables plus one trace per trial. Output is byte-stable for equal inputs."""
    if not experiments:
        raise ConfigurationError("nothing to report")
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ConfigurationError(f"unknown report formats {sorted(bad)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    written: list[Path] = []
    rows = [s.row() for s, _ in experiments]
    if "csv" in formats:
        p = out / "summary.csv"
        _write_csv(p, SUMMARY_COLUMNS, ([r[c] for c in SUMMARY_COLUMNS] for r in rows))
        written.append(p)
    if "json" in formats:
        p = out / "summary.json"
        doc = {"schema": TRACE_SCHEMA, "experiments": rows}
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(p)

    multi = len(experiments) > 1
    for summary, results in experiments:
        prefix = f"{summary.algorithm}_{summary.sensor.lower()}_" if multi else ""
        for k, res in enumerate(results):
            p = out / f"{prefix}trial_{k}.csv"
            _write_csv(p, TRACE_COLUMNS, res.trace)
            written.append(p)
            if res.spheres:
                p = out / f"{prefix}spheres_{k}.csv"
                _write_csv(p, SPHERE_COLUMNS, res.spheres)
                written.append(p)
    if learning_curves:
        names = sorted(learning_curves)
        n = max(len(learning_curves[k]) for k in names)
        p = out / "learning_curve.csv"
        _write_csv(
            p,
            ("episode", *names),
            ((i, *(float(learning_curves[k][i]) if i < len(learning_curves[k]) else math.nan for k in names)) for i in range(n)),
        )
        written.append(p)
    return written


# --------------------------------------------------------------------------
# Qualitative checks across experiment cells

ORDERING_ALPHA = 0.1


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _success_times(s: ExperimentSummary) -> np.ndarray:
    return np.array([t for t in s.times if not math.isnan(t)], dtype=float)


def _not_slower(faster: ExperimentSummary, slower: ExperimentSummary) -> Check:
    """Mean(faster) <= mean(slower) unless a one-sided Welch test shows the reverse."""
    a, b = _success_times(faster), _success_times(slower)
    name = f"{faster.algorithm} <= {slower.algorithm} ({faster.sensor})"
    if len(a) < 2 or len(b) < 2:
        return Check(name, False, "too few successful trials")
    p = float(stats.ttest_ind(a, b, equal_var=False, alternative="greater").pvalue)
    return Check(name, p >= ORDERING_ALPHA, f"{a.mean():.2f} vs {b.mean():.2f} s, p(reverse)={p:.3f}")


def check_experiments(summaries: Sequence[ExperimentSummary]) -> list[Check]:
    """Qualitative checks over whichever cells are present."""
    cells = {(s.algorithm, s.sensor): s for s in summaries}
    checks = [
        Check(f"all succeed ({s.algorithm}, {s.sensor})", s.successes == s.trials, f"{s.successes}/{s.trials}")
        for s in summaries
    ]
    for sensor in sorted({s.sensor for s in summaries}):
        for fast, slow in (("rl", "belief_map"), ("belief_map", "gradient")):
            if (fast, sensor) in cells and (slow, sensor) in cells:
                checks.append(_not_slower(cells[fast, sensor], cells[slow, sensor]))
        if ("rl", sensor) in cells and ("gradient", sensor) in cells:
            rl, gr = cells["rl", sensor], cells["gradient", sensor]
            checks.append(
                Check(
                    f"std rl >= std gradient ({sensor})",
                    rl.std_time >= gr.std_time,
                    f"{rl.std_time:.2f} vs {gr.std_time:.2f} s",
                )
            )
    for alg in ("gradient", "belief_map"):
        if (alg, "MOX") in cells and (alg, "EC") in cells:
            m, e = cells[alg, "MOX"], cells[alg, "EC"]
            checks.append(Check(f"MOX < EC ({alg})", m.mean_time < e.mean_time, f"{m.mean_time:.2f} vs {e.mean_time:.2f} s"))
    return checks
