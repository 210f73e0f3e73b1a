import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oio.errors import DomainError, EstimationError, NotReadyError, ConfigurationError
from oio.plume import Environment
from oio.sensors import (
    FARADAY,
    EcSensorParams,
    EnvCorrection,
    MoxSensorParams,
    SensorKind,
    cottrell_current,
    dual_sample,
    ec_fast_estimate,
    make_rig,
    make_sensor,
    mox_resistance,
    sample,
    write_readings_csv,
)

ENV = Environment()


def quiet(p):
    return type(p)(**{**p.__dict__, "noise": 0.0, "noise_floor": 0.0, "drift_rate": 0.0})


def test_mox_examples():
    assert mox_resistance(5, 5, 10000) == 0.0
    assert mox_resistance(5, 2.5, 10000) == 10000.0
    assert mox_resistance(5, 1.0, 10000) == 40000.0


@pytest.mark.parametrize("v", [0.0, -1.0, 5.01])
def test_mox_domain(v):
    with pytest.raises(DomainError):
        mox_resistance(5, v, 10000)


def test_mox_monotone_on_grid():
    v = np.linspace(0.05, 5.0, 400)
    r = [mox_resistance(5.0, x, 10000) for x in v]
    assert all(a > b for a, b in zip(r, r[1:]))


def test_cottrell_examples():
    p = EcSensorParams(n_e=1, A=2.25, D_k=1e-5)
    assert cottrell_current(p, 0.0, 1.0) == 0.0
    i = cottrell_current(p, 1e-6, 1.0)
    expected = 1 * 96485 * 2.25 * 1e-6 * math.sqrt(1e-5) / math.sqrt(math.pi)
    assert i == pytest.approx(3.873e-4, rel=1e-4)
    assert i == pytest.approx(expected, rel=1e-9)
    assert cottrell_current(p, 1e-6, 4.0) == pytest.approx(i / 2, rel=1e-12)
    with pytest.raises(DomainError):
        cottrell_current(p, 1e-6, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-9, 1e-3), st.floats(1e-3, 100), st.floats(0.1, 10), st.integers(1, 4))
def test_cottrell_scaling(c, t, A, n):
    p = EcSensorParams(n_e=n, A=A)
    base = cottrell_current(p, c, t)
    assert cottrell_current(p, 2 * c, t) == pytest.approx(2 * base, rel=1e-12)
    assert cottrell_current(p, c, 4 * t) == pytest.approx(base / 2, rel=1e-12)
    assert cottrell_current(EcSensorParams(n_e=2 * n, A=A), c, t) == pytest.approx(2 * base, rel=1e-12)
    assert cottrell_current(EcSensorParams(n_e=n, A=3 * A), c, t) == pytest.approx(3 * base, rel=1e-12)


def test_faraday_fixed():
    assert EcSensorParams().F == FARADAY == 96485.0
    with pytest.raises(ConfigurationError):
        EcSensorParams(F=96000.0)
    assert EcSensorParams().A == 2.25 and EcSensorParams().reduction_potential == 0.8


def test_lag_converges_monotonically():
    s = make_sensor("MOX", params=quiet(MoxSensorParams()), powered_on_at=-4000)
    rng = np.random.default_rng(0)
    sample(s, 0.0, ENV, 0.0, rng)
    target = s.params.equilibrium(50.0)
    vals = [sample(s, 50.0, ENV, t, rng).value for t in np.arange(0.1, 2.6, 0.1)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - target) <= abs(target) * math.exp(-5) + 1e-12


def _t90(params, dt=0.01):
    s = make_sensor(SensorKind.MOX if isinstance(params, MoxSensorParams) else SensorKind.EC, params=quiet(params), powered_on_at=-1e4)
    rng = np.random.default_rng(0)
    sample(s, 0.0, ENV, 0.0, rng)
    target = s.params.equilibrium(50.0)
    t = 0.0
    while True:
        t += dt
        if sample(s, 50.0, ENV, t, rng).value >= 0.9 * target:
            return t


def test_ec_slower_than_mox_step_response():
    mox = MoxSensorParams(response_time_constant=0.5)
    ec = EcSensorParams(response_time_constant=1.0)
    t_mox, t_ec = _t90(mox), _t90(ec)
    assert t_ec > t_mox
    assert t_mox == pytest.approx(0.5 * math.log(10), abs=0.011)
    assert t_ec == pytest.approx(1.0 * math.log(10), abs=0.011)


def test_default_time_constants_ordered():
    assert EcSensorParams().response_time_constant > MoxSensorParams().response_time_constant


def test_sample_determinism_and_warmup():
    def one(seed):
        s = make_sensor("EC", powered_on_at=-100)
        return sample(s, 10.0, ENV, 0.0, np.random.default_rng(seed))

    assert one(1) == one(1)
    with pytest.raises(NotReadyError):
        sample(make_sensor("MOX", powered_on_at=0.0), 1.0, ENV, 10.0, np.random.default_rng(0))


def test_reading_carries_environment():
    env = Environment(temperature=30.0, humidity=70.0)
    r = sample(make_sensor("MOX", powered_on_at=-4000), 5.0, env, 0.0, np.random.default_rng(0))
    assert (r.temperature, r.humidity) == (30.0, 70.0)
    assert r.sensor_kind is SensorKind.MOX


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(0, 60), st.floats(0, 100))
def test_env_correction_round_trip(v, temp, rh):
    c = EnvCorrection()
    env = Environment(temperature=temp, humidity=rh)
    assert c.correct(c.apply(v, env), env) == pytest.approx(v, rel=1e-12, abs=1e-12)
    assert c.correct(v, Environment()) == v


def test_reading_is_environment_independent():
    def read(env):
        s = make_sensor("MOX", powered_on_at=-4000)
        return sample(s, 5.0, env, 0.0, np.random.default_rng(3)).value

    assert read(Environment(temperature=10, humidity=90)) == pytest.approx(read(Environment()), rel=1e-12)


def test_dual_identical_noiseless():
    rig = make_rig("MOX", quiet(MoxSensorParams()), powered_on_at=-4000)
    rng = np.random.default_rng(0)
    dual_sample(rig, 5.0, ENV, 0.0, rng)
    m = dual_sample(rig, 5.0, ENV, 0.0, rng)
    assert m.lower == m.mean == m.upper


def test_dual_summary_definition():
    rig = make_rig("MOX", quiet(MoxSensorParams()), powered_on_at=-4000)
    p = rig.sensor_a.params
    # Pick concentrations whose equilibrium responses are 0.4 and 0.6.
    from scipy.optimize import brentq

    c4 = brentq(lambda c: p.equilibrium(c) - 0.4, 0, 1e3)
    c6 = brentq(lambda c: p.equilibrium(c) - 0.6, 0, 1e3)
    rng = np.random.default_rng(0)
    dual_sample(rig, c4, ENV, 0.0, rng)
    m = dual_sample(rig, c6, ENV, 0.0, rng)
    assert (m.mean, m.lower, m.upper) == pytest.approx((0.5, 0.4, 0.6), abs=1e-12)


def test_dual_alternation():
    rig = make_rig("EC", powered_on_at=-100)
    rng = np.random.default_rng(0)
    for k in range(6):
        assert rig.active == k % 2
        dual_sample(rig, 1.0, ENV, 0.4 * k, rng)
    ids = [r.sensor_id for r in rig.history]
    assert ids == ["ec_a", "ec_b"] * 3


def test_fast_estimate_noiseless():
    p = EcSensorParams()
    c = 3.3e-7
    tr = [(t, cottrell_current(p, c, t)) for t in (0.1, 0.2, 0.3, 0.5)]
    assert ec_fast_estimate(tr, p) == pytest.approx(c, rel=1e-9)
    assert ec_fast_estimate([(t, 0.0) for t in (0.1, 0.2, 0.3)], p) == 0.0


def test_fast_estimate_noisy_median():
    p = EcSensorParams()
    c = 1e-6
    ts = np.linspace(0.1, 1.0, 10)
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        tr = [(t, cottrell_current(p, c, t) * (1 + 0.01 * rng.standard_normal())) for t in ts]
        errs.append(abs(ec_fast_estimate(tr, p) / c - 1))
    assert np.median(errs) < 0.05


@pytest.mark.parametrize("bad", [[(0.1, 1.0), (0.2, 1.0)], [(0.0, 1.0), (0.1, 1.0), (0.2, 1.0)], [(0.3, 1.0)] * 3])
def test_fast_estimate_degenerate(bad):
    with pytest.raises(EstimationError):
        ec_fast_estimate(bad)


def test_reading_csv(tmp_path):
    rig = make_rig("MOX", powered_on_at=-4000)
    rng = np.random.default_rng(0)
    for k in range(3):
        dual_sample(rig, 2.0, ENV, 0.4 * k, rng)
    path = tmp_path / "readings.csv"
    write_readings_csv(rig.history, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "sensor_id", "kind", "raw", "value", "temp", "rh"]
    assert len(rows) == 4 and rows[2][1] == "mox_b"
