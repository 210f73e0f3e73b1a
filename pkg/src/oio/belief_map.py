"""RSSI-style belief spheres and their intersections.

Every reading becomes a sphere around the sensor whose radius is the
calibrated distance to the source. Two spheres meet in a circle, three in
a pair of points, four (ideally) in one point; the last five spheres are
kept and the best available intersection becomes the navigation target.
"""
from __future__ import annotations

import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometryError
from .plume import DETECTION_FLOOR

log = logging.getLogger(__name__)

WINDOW_SIZE = 5
VERTEX_TOLERANCE = 0.05  # m
MAX_GN_ITERATIONS = 50


def to_rssi(value: float, floor: float = DETECTION_FLOOR) -> float:
    """Negated reciprocal of the olfaction value; stronger scent reads closer to zero."""
    if value < floor:
        if value <= 0:
            warnings.warn(f"non-positive olfaction value {value!r} clamped to {floor}", RuntimeWarning, stacklevel=2)
        value = floor
    return -1.0 / value


@dataclass(frozen=True)
class RadiusCalibration:
    """Distance to the source as ``k / value``."""

    k: float = 0.1
    floor: float = DETECTION_FLOOR

    def __call__(self, value: float) -> float:
        return self.k / max(value, self.floor)

    @classmethod
    def from_probe(cls, distance: float, value: float) -> "RadiusCalibration":
        """Calibrate from one reading taken at a known distance from the source."""
        return cls(k=distance * value)


@dataclass(frozen=True)
class BeliefSphere:
    center: np.ndarray
    radius: float
    radius_lower: float
    radius_upper: float
    timestamp: float = 0.0


def sphere_from_reading(
    position,
    mean: float,
    lower: float,
    upper: float,
    calib: RadiusCalibration = RadiusCalibration(),
    timestamp: float = 0.0,
) -> BeliefSphere | None:
    """Sphere centred on the sensor; ``None`` when the reading carries no information.

    The stronger reading gives the inner radius and the weaker the outer one.
    """
    if min(mean, lower, upper) < calib.floor:
        return None
    return BeliefSphere(
        center=np.asarray(position, dtype=float).copy(),
        radius=calib(mean),
        radius_lower=calib(upper),
        radius_upper=calib(lower),
        timestamp=timestamp,
    )


@dataclass(frozen=True)
class SigmaSet:
    kind: str  # "circle" | "pair" | "point" | "empty"
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    center: np.ndarray | None = None
    normal: np.ndarray | None = None
    radius: float = 0.0

    @property
    def empty(self) -> bool:
        return self.kind == "empty"

    def circle_points(self, n: int = 16) -> np.ndarray:
        """Evenly spaced points on a circle set."""
        if self.kind != "circle":
            return self.points
        u = np.cross(self.normal, [1.0, 0.0, 0.0])
        if np.linalg.norm(u) < 1e-6:
            u = np.cross(self.normal, [0.0, 1.0, 0.0])
        u /= np.linalg.norm(u)
        v = np.cross(self.normal, u)
        th = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        return self.center + self.radius * (np.outer(np.cos(th), u) + np.outer(np.sin(th), v))

    def nearest(self, point) -> np.ndarray | None:
        point = np.asarray(point, dtype=float)
        if self.kind == "empty":
            return None
        if self.kind == "circle":
            off = point - self.center
            off -= (off @ self.normal) * self.normal
            n = np.linalg.norm(off)
            if n < 1e-12:
                return self.circle_points(1)[0]
            return self.center + self.radius * off / n
        d = np.linalg.norm(self.points - point, axis=1)
        return self.points[int(np.argmin(d))]


EMPTY = SigmaSet("empty")


def intersect_two(s1: BeliefSphere, s2: BeliefSphere, tol: float = 1e-9) -> SigmaSet:
    c1, c2 = np.asarray(s1.center, float), np.asarray(s2.center, float)
    r1, r2 = s1.radius, s2.radius
    axis = c2 - c1
    d = float(np.linalg.norm(axis))
    if d < 1e-12:
        raise DegenerateGeometryError("spheres share a center")
    n = axis / d
    if d > r1 + r2 + tol or d < abs(r1 - r2) - tol:
        return EMPTY
    a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h2 = r1 * r1 - a * a
    if abs(d - (r1 + r2)) <= tol or abs(d - abs(r1 - r2)) <= tol or h2 <= 0:
        return SigmaSet("point", points=(c1 + a * n)[None, :])
    return SigmaSet("circle", points=np.zeros((0, 3)), center=c1 + a * n, normal=n, radius=math.sqrt(h2))


def intersect_three(s1: BeliefSphere, s2: BeliefSphere, s3: BeliefSphere, tol: float = 1e-9) -> SigmaSet:
    """Trilaterate three spheres into a point pair, a single point or nothing.

    When the spheres just miss each other the closest in-plane point is
    accepted as a single point if it lies within ``tol`` of every sphere.
    """
    c1, c2, c3 = (np.asarray(s.center, float) for s in (s1, s2, s3))
    r1, r2, r3 = s1.radius, s2.radius, s3.radius
    d = float(np.linalg.norm(c2 - c1))
    if d < 1e-12:
        raise DegenerateGeometryError("spheres share a center")
    ex = (c2 - c1) / d
    v = c3 - c1
    i = float(ex @ v)
    w = v - i * ex
    j = float(np.linalg.norm(w))
    if j < 1e-9 * max(1.0, d, float(np.linalg.norm(v))):
        raise DegenerateGeometryError("sphere centers are collinear")
    ey = w / j
    ez = np.cross(ex, ey)
    x = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d)
    y = (r1 * r1 - r3 * r3 + i * i + j * j) / (2.0 * j) - (i / j) * x
    z2 = r1 * r1 - x * x - y * y
    base = c1 + x * ex + y * ey
    spheres = (s1, s2, s3)
    if z2 > 0:
        z = math.sqrt(z2)
        if z <= tol:
            return SigmaSet("point", points=base[None, :])
        return SigmaSet("pair", points=np.vstack([base + z * ez, base - z * ez]))
    if _max_residual(base, spheres) <= tol:
        return SigmaSet("point", points=base[None, :])
    return EMPTY


def _residuals(p: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    return np.linalg.norm(p - centers, axis=1) - radii


def _max_residual(p, spheres) -> float:
    return max(abs(float(np.linalg.norm(p - s.center)) - s.radius) for s in spheres)


def _linear_seed(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    # Differences of sphere equations are linear in p.
    A = 2.0 * (centers[1:] - centers[0])
    b = radii[0] ** 2 - radii[1:] ** 2 + np.sum(centers[1:] ** 2, axis=1) - np.sum(centers[0] ** 2)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def _gauss_newton(p: np.ndarray, centers: np.ndarray, radii: np.ndarray, max_iter: int) -> tuple[np.ndarray, bool]:
    for _ in range(max_iter):
        diff = p - centers
        dist = np.linalg.norm(diff, axis=1)
        if np.any(dist < 1e-12):
            return p, False
        f = dist - radii
        J = diff / dist[:, None]
        step = np.linalg.lstsq(J, -f, rcond=None)[0]
        p = p + step
        if np.linalg.norm(step) <= 1e-13 * max(1.0, float(np.linalg.norm(p))):
            return p, True
    return p, False


def voronoi_vertex(
    spheres: Sequence[BeliefSphere],
    tol: float = VERTEX_TOLERANCE,
    max_iter: int = MAX_GN_ITERATIONS,
) -> np.ndarray | None:
    """Least-squares common point of four (or more) spheres, or ``None``.

    Seeds Gauss-Newton from the linearised solution and from the
    three-sphere pair, keeps the best converged candidate and accepts it
    only if every sphere passes within ``tol``.
    """
    centers = np.array([s.center for s in spheres], dtype=float)
    radii = np.array([s.radius for s in spheres], dtype=float)
    seeds = [_linear_seed(centers, radii)]
    try:
        trio = intersect_three(*spheres[:3], tol=tol)
        seeds.extend(trio.points)
    except DegenerateGeometryError:
        pass

    best, best_cost, converged_any = None, math.inf, False
    for seed in seeds:
        p, ok = _gauss_newton(np.asarray(seed, float), centers, radii, max_iter)
        if not ok:
            continue
        converged_any = True
        cost = float(np.max(np.abs(_residuals(p, centers, radii))))
        if cost < best_cost:
            best, best_cost = p, cost
    if not converged_any:
        log.info("vertex search did not converge in %d iterations", max_iter)
        return None
    if best_cost >= tol:
        return None
    return best


@dataclass
class SphereWindow:
    spheres: deque = field(default_factory=lambda: deque(maxlen=WINDOW_SIZE))

    def __len__(self) -> int:
        return len(self.spheres)

    def push(self, sphere: BeliefSphere) -> None:
        if self.spheres and sphere.timestamp <= self.spheres[-1].timestamp:
            raise ValueError("sphere timestamps must be strictly increasing")
        self.spheres.append(sphere)

    def latest(self, n: int) -> list[BeliefSphere]:
        return list(self.spheres)[-n:]


@dataclass(frozen=True)
class TargetUpdate:
    target: np.ndarray | None
    source: str  # "vertex" | "pair" | "point" | "circle" | "none"
    switched: bool = False


def update_window_and_target(
    window: SphereWindow,
    new: BeliefSphere | None,
    rssi_trend: Sequence[float],
    current_target,
    rng: np.random.Generator,
    tol: float = VERTEX_TOLERANCE,
) -> tuple[SphereWindow, TargetUpdate]:
    """Push the newest sphere and choose where to head next.

    Prefers a four-sphere vertex, then the freshest three-sphere pair, then
    the point of the freshest two-sphere circle nearest the sensor. With a
    pair and no target one member is picked at random; when the RSSI trend
    is falling while heading for a member, the other member is chosen.
    """
    if new is not None:
        window.push(new)
    if len(window) < 2:
        return window, TargetUpdate(None, "none")

    here = window.spheres[-1].center
    if len(window) >= 4:
        vertex = voronoi_vertex(window.latest(4), tol=tol)
        if vertex is not None:
            return window, TargetUpdate(vertex, "vertex")

    if len(window) >= 3:
        try:
            trio = intersect_three(*window.latest(3), tol=tol)
        except DegenerateGeometryError:
            trio = EMPTY
        if trio.kind == "pair":
            p1, p2 = trio.points
            falling = len(rssi_trend) >= 2 and rssi_trend[-1] < rssi_trend[-2]
            if current_target is None:
                return window, TargetUpdate(trio.points[int(rng.integers(2))], "pair")
            cur = np.asarray(current_target, float)
            near, far = (p1, p2) if np.linalg.norm(p1 - cur) <= np.linalg.norm(p2 - cur) else (p2, p1)
            if falling:
                return window, TargetUpdate(far, "pair", switched=True)
            return window, TargetUpdate(near, "pair")
        if trio.kind == "point":
            return window, TargetUpdate(trio.points[0], "point")

    try:
        circle = intersect_two(*window.latest(2), tol=tol)
    except DegenerateGeometryError:
        circle = EMPTY
    if circle.empty:
        return window, TargetUpdate(None, "none")
    return window, TargetUpdate(circle.nearest(here), circle.kind)
