import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oio.belief_map import (
    BeliefSphere,
    RadiusCalibration,
    SphereWindow,
    intersect_three,
    intersect_two,
    sphere_from_reading,
    to_rssi,
    update_window_and_target,
    voronoi_vertex,
)
from oio.errors import DegenerateGeometryError
from oio.plume import PlumeParams, concentration_at, purge_and_develop
from oio.sensors import MoxSensorParams


def S(c, r, t=0.0):
    return BeliefSphere(np.asarray(c, float), r, r, r, t)


def test_rssi_examples():
    assert to_rssi(1.0) == -1.0
    assert to_rssi(0.5) == -2.0


def test_rssi_clamps_non_positive():
    with pytest.warns(RuntimeWarning):
        assert to_rssi(0.0) == -1e6
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert to_rssi(1e-9) == -1e6


@settings(max_examples=300)
@given(st.floats(1e-5, 1e5), st.floats(1e-5, 1e5))
def test_rssi_monotone(a, b):
    if a < b:
        assert to_rssi(a) < to_rssi(b)
    assert to_rssi(a) < 0


def test_sphere_from_reading():
    s = sphere_from_reading((0, 0, 0), 0.5, 0.5, 0.5)
    assert s.radius == s.radius_lower == s.radius_upper == pytest.approx(0.2)
    s1 = sphere_from_reading((0, 0, 0), 0.4, 0.3, 0.5)
    assert s1.radius_lower <= s1.radius <= s1.radius_upper
    assert sphere_from_reading((0, 0, 0), 0.8, 0.8, 0.8).radius < s1.radius
    assert sphere_from_reading((0, 0, 0), 0.4, 1e-9, 0.5) is None


def test_calibration_from_probe():
    c = RadiusCalibration.from_probe(0.3, 2.0)
    assert c(2.0) == pytest.approx(0.3)
    assert c(4.0) == pytest.approx(0.15)


def test_rssi_and_radius_follow_distance_in_clean_field():
    plume = purge_and_develop(PlumeParams(wind_gust_scale=0.0), 30.0, np.random.default_rng(0))
    src = plume.source
    mox = MoxSensorParams()
    for ang in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        ray = np.array([math.cos(ang), math.sin(ang), 0.0])
        rssi = [to_rssi(mox.equilibrium(concentration_at(plume, src + d * ray))) for d in np.linspace(0.05, 0.6, 12)]
        assert all(a > b for a, b in zip(rssi, rssi[1:]))


def test_two_sphere_examples():
    c = intersect_two(S((0, 0, 0), 5), S((6, 0, 0), 5))
    assert c.kind == "circle"
    np.testing.assert_allclose(c.center, (3, 0, 0))
    assert c.radius == pytest.approx(4.0)
    np.testing.assert_allclose(c.normal, (1, 0, 0))
    p = intersect_two(S((0, 0, 0), 5), S((10, 0, 0), 5))
    assert p.kind == "point"
    np.testing.assert_allclose(p.points[0], (5, 0, 0))
    assert intersect_two(S((0, 0, 0), 1), S((10, 0, 0), 1)).empty
    assert intersect_two(S((0, 0, 0), 10), S((1, 0, 0), 1)).empty
    with pytest.raises(DegenerateGeometryError):
        intersect_two(S((1, 1, 1), 1), S((1, 1, 1), 2))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_two_sphere_points_on_both(seed):
    rng = np.random.default_rng(seed)
    c1, c2 = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    d = np.linalg.norm(c2 - c1)
    r1 = rng.uniform(0.55, 1.0) * d
    r2 = rng.uniform(abs(d - r1) + 1e-3, d + r1 - 1e-3)
    s1, s2 = S(c1, r1), S(c2, r2)
    c = intersect_two(s1, s2)
    assert c.kind == "circle"
    for p in c.circle_points(12):
        assert abs(np.linalg.norm(p - c1) - r1) < 1e-9
        assert abs(np.linalg.norm(p - c2) - r2) < 1e-9


def test_three_sphere_algebraic_case():
    pair = intersect_three(S((0, 0, 0), 5), S((6, 0, 0), 5), S((0, 6, 0), 5))
    assert pair.kind == "pair"
    got = sorted(map(tuple, pair.points), key=lambda p: p[2])
    np.testing.assert_allclose(got[0], (3, 3, -math.sqrt(7)), atol=1e-9)
    np.testing.assert_allclose(got[1], (3, 3, math.sqrt(7)), atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_three_sphere_construct_then_recover(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-1, 1, 3)
    cs = rng.uniform(-1, 1, (3, 3))
    if np.linalg.norm(np.cross(cs[1] - cs[0], cs[2] - cs[0])) < 1e-2:
        return
    pair = intersect_three(*(S(c, np.linalg.norm(p - c)) for c in cs))
    assert pair.kind in ("pair", "point")
    assert min(np.linalg.norm(q - p) for q in pair.points) < 1e-6
    for q in pair.points:
        for c in cs:
            assert abs(np.linalg.norm(q - c) - np.linalg.norm(p - c)) < 1e-6


def test_three_sphere_infeasible_and_collinear():
    assert intersect_three(S((0, 0, 0), 0.1), S((5, 0, 0), 0.1), S((0, 5, 0), 0.1)).empty
    with pytest.raises(DegenerateGeometryError):
        intersect_three(S((0, 0, 0), 1), S((1, 0, 0), 1), S((2, 0, 0), 1))


def test_vertex_exact_recovery():
    p = np.array([0.3, -0.2, 0.4])
    cs = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    v = voronoi_vertex([S(c, np.linalg.norm(p - c)) for c in cs])
    np.testing.assert_allclose(v, p, atol=1e-9)


def test_vertex_perturbed_radii():
    # Regular tetrahedron of unit-distance centres; the source anywhere in the half-metre cube.
    cs = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / math.sqrt(3)
    rng = np.random.default_rng(5)
    for _ in range(500):
        p = rng.uniform(-0.5, 0.5, 3)
        spheres = [S(c, np.linalg.norm(p - c) * (1 + rng.uniform(-0.01, 0.01))) for c in cs]
        v = voronoi_vertex(spheres)
        assert v is not None
        assert np.linalg.norm(v - p) < 0.05


def test_vertex_disjoint_is_none():
    cs = [(0, 0, 0), (5, 0, 0), (0, 5, 0), (0, 0, 5)]
    assert voronoi_vertex([S(c, 0.1) for c in cs]) is None


def test_window_fifo():
    w = SphereWindow()
    rng = np.random.default_rng(0)
    for k in range(1, 7):
        w, _ = update_window_and_target(w, S((k, k * k % 3, 0.1 * k), 2.0, t=float(k)), [], None, rng)
    assert [s.timestamp for s in w.spheres] == [2.0, 3.0, 4.0, 5.0, 6.0]


def test_window_needs_two_spheres():
    w, upd = update_window_and_target(SphereWindow(), S((0, 0, 0), 1.0), [], None, np.random.default_rng(0))
    assert upd.target is None and upd.source == "none"


def test_window_rejects_stale_timestamp():
    w = SphereWindow()
    w.push(S((0, 0, 0), 1, t=1.0))
    with pytest.raises(ValueError):
        w.push(S((1, 0, 0), 1, t=1.0))


def _pair_window():
    w = SphereWindow()
    for k, c in enumerate([(0, 0, 0), (6, 0, 0), (0, 6, 0)]):
        w.push(S(c, 5.0, t=float(k)))
    return w


def test_pair_switch_on_falling_rssi():
    w = _pair_window()
    p1 = np.array([3, 3, math.sqrt(7)])
    p2 = np.array([3, 3, -math.sqrt(7)])
    # Re-evaluate without a new sphere: the window already holds the trio.
    w, upd = update_window_and_target(w, None, [-1.0, -2.0], p1, np.random.default_rng(0))
    assert upd.source == "pair" and upd.switched
    np.testing.assert_allclose(upd.target, p2, atol=1e-9)
    w, upd = update_window_and_target(w, None, [-2.0, -1.0], p1, np.random.default_rng(0))
    np.testing.assert_allclose(upd.target, p1, atol=1e-9)
    assert not upd.switched


def test_pair_random_pick_without_target():
    picks = set()
    for seed in range(20):
        _, upd = update_window_and_target(_pair_window(), None, [], None, np.random.default_rng(seed))
        picks.add(round(float(upd.target[2]), 6))
    assert picks == {round(math.sqrt(7), 6), round(-math.sqrt(7), 6)}


def test_vertex_preferred_and_matches_direct_call():
    p = np.array([0.2, 0.1, -0.1])
    cs = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (-1, -1, 0.5)]
    w = SphereWindow()
    rng = np.random.default_rng(0)
    for k, c in enumerate(cs):
        w, upd = update_window_and_target(w, S(c, np.linalg.norm(p - np.asarray(c)), t=float(k)), [], None, rng)
    assert upd.source == "vertex"
    np.testing.assert_array_equal(upd.target, voronoi_vertex(w.latest(4)))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.05, 2)), max_size=15))
def test_window_bound(items):
    w = SphereWindow()
    rng = np.random.default_rng(0)
    for k, (x, y, z, r) in enumerate(items):
        try:
            w, _ = update_window_and_target(w, S((x, y, z), r, t=float(k)), [], None, rng)
        except DegenerateGeometryError:
            pass
        assert len(w) <= 5
