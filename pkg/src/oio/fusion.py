"""Extended Kalman filter over effector pose and candidate source landmarks.

State layout: the first ``pose_dim`` entries are the effector pose
(x, y, z, azimuth, elevation for the arm; shorter poses are allowed for
toy problems), followed by three entries per landmark. Positional entries
are the first ``min(3, pose_dim)`` pose components.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2

from .errors import ConfigurationError, NoLandmarkError
from .kinematics import EncoderDriftModel, N_JOINTS, position_jacobian, wrap_degrees

log = logging.getLogger(__name__)

POSE_DIM = 5
ANGLE_COMPONENTS = (3, 4)  # azimuth, elevation in the 5-D pose
GATE_PROBABILITY = 0.99
BANK_CAPACITY = 16

MEASUREMENT_KINDS = ("pose", "range", "bearing", "landmark")


@dataclass(frozen=True)
class EkfState:
    mean: np.ndarray
    covariance: np.ndarray
    process_noise: np.ndarray
    observation_noise: dict = field(default_factory=dict)
    pose_dim: int = POSE_DIM
    rejections: int = 0

    def __post_init__(self):
        n = self.mean.shape[0]
        if self.covariance.shape != (n, n):
            raise ConfigurationError("covariance shape does not match the mean")
        if (n - self.pose_dim) % 3:
            raise ConfigurationError("landmark block must hold 3 entries per landmark")
        if self.process_noise.shape != (self.pose_dim, self.pose_dim):
            raise ConfigurationError("process noise must cover the pose block")

    @property
    def n_landmarks(self) -> int:
        return (self.mean.shape[0] - self.pose_dim) // 3

    @property
    def pose(self) -> np.ndarray:
        return self.mean[: self.pose_dim]

    @property
    def position(self) -> np.ndarray:
        return self.mean[: min(3, self.pose_dim)]

    @property
    def pose_covariance(self) -> np.ndarray:
        return self.covariance[: self.pose_dim, : self.pose_dim]

    def landmark_slice(self, j: int) -> slice:
        start = self.pose_dim + 3 * j
        return slice(start, start + 3)


def new_ekf(pose, pose_covariance, process_noise, observation_noise=None) -> EkfState:
    pose = np.asarray(pose, dtype=float)
    return EkfState(
        mean=pose.copy(),
        covariance=np.array(pose_covariance, dtype=float),
        process_noise=np.array(process_noise, dtype=float),
        observation_noise=dict(observation_noise or {}),
        pose_dim=pose.shape[0],
    )


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def drift_process_noise(
    angles,
    link_lengths,
    model: EncoderDriftModel = EncoderDriftModel(),
    dt: float = 1.0,
    floor: float = 1e-10,
) -> np.ndarray:
    """Diagonal pose process noise from the encoder drift rates.

    Each joint's drift rate is integrated twice over ``dt`` to an angle
    standard deviation, then mapped into the pose through the kinematic
    Jacobian. Only the diagonal is kept.
    """
    sigma_q = model.sigma * dt * dt / 2.0
    Jp = position_jacobian(angles, link_lengths)
    G = np.zeros((POSE_DIM, N_JOINTS))
    G[:3] = Jp
    G[3, 0] = 1.0
    G[4, 1:4] = 1.0
    var = (G**2) @ (sigma_q**2)
    return np.diag(var + floor)


def predict(
    ekf: EkfState,
    control,
    dt: float = 1.0,
    motion: Callable[[np.ndarray, np.ndarray, float], tuple[np.ndarray, np.ndarray]] | None = None,
) -> EkfState:
    """Propagate the pose through the motion model; landmarks are static.

    The default model adds the commanded pose increment ``control`` (the
    open-loop displacement of one action). A custom ``motion(pose, control,
    dt)`` must return the new pose and its Jacobian.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    k = ekf.pose_dim
    pose = ekf.mean[:k]
    if motion is None:
        new_pose = pose + np.asarray(control, dtype=float)
        F = np.eye(k)
    else:
        new_pose, F = motion(pose, np.asarray(control, dtype=float), dt)
    if k == POSE_DIM:
        new_pose = new_pose.copy()
        new_pose[3] = wrap_degrees(new_pose[3])

    mean = ekf.mean.copy()
    mean[:k] = new_pose
    P = ekf.covariance.copy()
    Fx = np.eye(P.shape[0])
    Fx[:k, :k] = F
    P = Fx @ P @ Fx.T
    P[:k, :k] += ekf.process_noise
    return replace(ekf, mean=mean, covariance=_symmetrize(P))


def _landmark_point(ekf: EkfState, landmark) -> tuple[np.ndarray, slice | None]:
    if isinstance(landmark, (int, np.integer)):
        if not 0 <= landmark < ekf.n_landmarks:
            raise ConfigurationError(f"no landmark {landmark} in state")
        sl = ekf.landmark_slice(int(landmark))
        return ekf.mean[sl], sl
    point = np.asarray(landmark, dtype=float)
    return point, None


def measurement_model(ekf: EkfState, kind: str, landmark=None) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    """Predicted measurement and Jacobian for ``kind``, plus the indices of its angle-valued components."""
    if kind not in MEASUREMENT_KINDS:
        raise ConfigurationError(f"unknown measurement kind {kind!r}; expected one of {MEASUREMENT_KINDS}")
    n, k = ekf.mean.shape[0], ekf.pose_dim
    if kind == "pose":
        H = np.zeros((k, n))
        H[:, :k] = np.eye(k)
        angles = ANGLE_COMPONENTS if k == POSE_DIM else ()
        return ekf.mean[:k].copy(), H, angles

    pdim = min(3, k)
    p = ekf.mean[:pdim]
    if kind == "landmark":
        point, sl = _landmark_point(ekf, landmark)
        if sl is None:
            raise ConfigurationError("landmark measurements need a state landmark index")
        H = np.zeros((3, n))
        H[:, sl] = np.eye(3)
        return point.copy(), H, ()

    point, sl = _landmark_point(ekf, landmark)
    point = point[:pdim]
    d = point - p
    if kind == "range":
        rng_ = float(np.linalg.norm(d))
        u = d / max(rng_, 1e-12)
        H = np.zeros((1, n))
        H[0, :pdim] = -u
        if sl is not None:
            H[0, sl.start : sl.start + pdim] = u
        return np.array([rng_]), H, ()

    if kind == "bearing":
        if pdim != 3:
            raise ConfigurationError("bearing measurements need a 3-D position")
        dx, dy, dz = d
        rho2 = dx * dx + dy * dy
        rho = math.sqrt(max(rho2, 1e-18))
        r2 = rho2 + dz * dz
        az = math.degrees(math.atan2(dy, dx))
        el = math.degrees(math.atan2(dz, rho))
        s = 180.0 / math.pi
        d_az = np.array([-dy / max(rho2, 1e-18), dx / max(rho2, 1e-18), 0.0]) * s
        d_el = np.array([-dx * dz / (r2 * rho), -dy * dz / (r2 * rho), rho / r2]) * s
        Hd = np.vstack([d_az, d_el])  # derivative w.r.t. d = point - p
        H = np.zeros((2, n))
        H[:, :3] = -Hd
        if sl is not None:
            H[:, sl] = Hd
        return np.array([az, el]), H, (0, 1)

    raise ConfigurationError(f"unknown measurement kind {kind!r}; expected one of {MEASUREMENT_KINDS}")


def update(
    ekf: EkfState,
    measurement,
    kind: str,
    R: np.ndarray | None = None,
    landmark=None,
    gate: float | None = GATE_PROBABILITY,
) -> EkfState:
    """Joseph-form EKF update.

    ``R`` defaults to ``ekf.observation_noise[kind]``. Measurements whose
    innovation fails the chi-square gate are rejected and leave the state
    unchanged apart from the rejection counter.
    """
    z = np.atleast_1d(np.asarray(measurement, dtype=float))
    z_pred, H, angle_idx = measurement_model(ekf, kind, landmark)
    if z.shape != z_pred.shape:
        raise ConfigurationError(f"{kind} measurement must have {z_pred.shape[0]} components")
    if R is None:
        if kind not in ekf.observation_noise:
            raise ConfigurationError(f"no observation noise configured for {kind!r}")
        R = ekf.observation_noise[kind]
    R = np.atleast_2d(np.asarray(R, dtype=float))

    nu = z - z_pred
    for i in angle_idx:
        nu[i] = wrap_degrees(nu[i])
    P = ekf.covariance
    S = H @ P @ H.T + R
    S_inv_nu = np.linalg.solve(S, nu)
    if gate is not None:
        d2 = float(nu @ S_inv_nu)
        if d2 > chi2.ppf(gate, df=len(nu)):
            log.info("rejected %s measurement: Mahalanobis^2 %.2f", kind, d2)
            return replace(ekf, rejections=ekf.rejections + 1)
    K = np.linalg.solve(S, H @ P).T  # P H^T S^-1, S symmetric
    mean = ekf.mean + K @ nu
    if ekf.pose_dim == POSE_DIM:
        mean[3] = wrap_degrees(mean[3])
    IKH = np.eye(P.shape[0]) - K @ H
    P_new = IKH @ P @ IKH.T + K @ R @ K.T
    return replace(ekf, mean=mean, covariance=_symmetrize(P_new))


# --------------------------------------------------------------------------
# Landmark bank


@dataclass(frozen=True)
class Landmark:
    position: np.ndarray
    covariance: np.ndarray
    order: int = 0

    @property
    def uncertainty_score(self) -> float:
        return float(np.trace(self.covariance))


def _sorted_bank(bank: Sequence[Landmark]) -> list[Landmark]:
    return sorted(bank, key=lambda lm: (lm.uncertainty_score, lm.order))


def fuse_gaussians(x1, P1, x2, P2) -> tuple[np.ndarray, np.ndarray]:
    """Product of two Gaussian estimates of the same point (information add)."""
    I1, I2 = np.linalg.inv(P1), np.linalg.inv(P2)
    P = np.linalg.inv(I1 + I2)
    x = P @ (I1 @ np.asarray(x1) + I2 @ np.asarray(x2))
    return x, _symmetrize(P)


def upsert_landmark(
    ekf: EkfState | None,
    bank: Sequence[Landmark],
    position,
    covariance,
    gate: float = GATE_PROBABILITY,
    capacity: int = BANK_CAPACITY,
) -> list[Landmark]:
    """Merge a candidate source position into the bank, or append it.

    The candidate merges with the nearest landmark that passes a chi-square
    gate on their combined covariance. The bank comes back sorted by
    uncertainty (trace of covariance), lowest first; past ``capacity`` the
    most uncertain landmark is dropped. ``ekf`` is accepted so callers can
    keep the state in step with :func:`sync_landmarks`; it is not modified.
    """
    x = np.asarray(position, dtype=float)
    P = np.asarray(covariance, dtype=float)
    if P.shape != (3, 3) or np.min(np.linalg.eigvalsh(_symmetrize(P))) < -1e-12:
        raise ConfigurationError("candidate covariance must be a 3x3 PSD matrix")
    bank = list(bank)
    threshold = chi2.ppf(gate, df=3)
    best, best_d2 = None, math.inf
    for i, lm in enumerate(bank):
        diff = x - lm.position
        d2 = float(diff @ np.linalg.solve(lm.covariance + P, diff))
        if d2 <= threshold and d2 < best_d2:
            best, best_d2 = i, d2
    if best is None:
        order = 1 + max((lm.order for lm in bank), default=-1)
        bank.append(Landmark(x, _symmetrize(P), order))
    else:
        lm = bank[best]
        xf, Pf = fuse_gaussians(lm.position, lm.covariance, x, P)
        bank[best] = Landmark(xf, Pf, lm.order)
    bank = _sorted_bank(bank)
    while len(bank) > capacity:
        evicted = bank.pop()
        log.info("landmark bank full; evicted landmark %d (uncertainty %.4g)", evicted.order, evicted.uncertainty_score)
    return bank


def best_landmark(bank: Sequence[Landmark]) -> Landmark:
    if not bank:
        raise NoLandmarkError("landmark bank is empty")
    return min(bank, key=lambda lm: (lm.uncertainty_score, lm.order))


def sync_landmarks(ekf: EkfState, bank: Sequence[Landmark]) -> EkfState:
    """Rebuild the landmark block of the state from the bank, keeping the pose block."""
    k = ekf.pose_dim
    n = k + 3 * len(bank)
    mean = np.zeros(n)
    mean[:k] = ekf.mean[:k]
    P = np.zeros((n, n))
    P[:k, :k] = ekf.covariance[:k, :k]
    for j, lm in enumerate(bank):
        s = slice(k + 3 * j, k + 3 * j + 3)
        mean[s] = lm.position
        P[s, s] = lm.covariance
    return replace(ekf, mean=mean, covariance=P)
