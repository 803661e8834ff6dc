import datetime as dt
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leoforensics import orbital
from leoforensics.ingest import parse_tle_lines

import oracles
from conftest import ISS_LINE1, ISS_LINE2

UTC = dt.timezone.utc


def circular_record(n=15.0, e=0.0, incl=53.0, raan=10.0, argp=30.0, M=40.0):
    rec = parse_tle_lines(ISS_LINE1, ISS_LINE2)
    return replace(rec, mean_motion=n, eccentricity=e, inclination=incl, raan=raan, arg_perigee=argp,
                   mean_anomaly=M, bstar=0.0, mean_motion_dot=0.0, mean_motion_ddot=0.0)


def test_altitude_closed_form_15_rev_per_day():
    # oracle: (398600.4418 * (86400 / (2 pi 15))^2)^(1/3) - 6378.137, evaluated independently
    state = orbital.derive_elements(1, dt.datetime(2024, 1, 1, tzinfo=UTC), 53.0, 0.0, 0.0, 0.0, 0.0, 15.0)
    assert state.mean_altitude == pytest.approx(566.8963456534902, abs=1e-6)
    assert state.mean_altitude == pytest.approx(566.9, abs=0.05)


def test_semi_major_axis_roundtrip_and_monotone():
    n = np.linspace(11.0, 16.5, 50)
    a = orbital.semi_major_axis(n)
    assert np.all(np.diff(a) < 0)
    assert np.allclose(orbital.mean_motion_from_altitude(a - orbital.R_EARTH_KM), n, rtol=1e-12)


def test_true_anomaly_against_bisection():
    assert orbital.solve_true_anomaly(90.0, 0.05) == pytest.approx(95.72006194709925, abs=1e-8)
    assert orbital.solve_true_anomaly(90.0, 0.05) == pytest.approx(oracles.kepler_bisection(90.0, 0.05), abs=1e-8)


@given(st.floats(0.0, 359.999), st.floats(0.0, 0.1))
@settings(max_examples=200, deadline=None)
def test_true_anomaly_property(M, e):
    nu = orbital.solve_true_anomaly(M, e)
    ref = oracles.kepler_bisection(M, e)
    assert abs((nu - ref + 180.0) % 360.0 - 180.0) < 1e-8


def test_true_anomaly_trivial_cases():
    assert orbital.solve_true_anomaly(123.4, 0.0) == pytest.approx(123.4, abs=1e-12)
    for e in (0.0, 0.03, 0.1):
        assert orbital.solve_true_anomaly(180.0, e) == pytest.approx(180.0, abs=1e-10)
    with pytest.raises(ValueError):
        orbital.solve_true_anomaly(10.0, 1.2)


def test_zero_eccentricity_phase_identity():
    rec = circular_record()
    t = rec.epoch
    state = orbital.propagate_two_body(rec, t)
    assert state.mean_anomaly == pytest.approx(rec.mean_anomaly)
    assert state.phase == pytest.approx((rec.arg_perigee + rec.mean_anomaly) % 360.0)
    assert state.mean_altitude <= state.apogee_altitude


def test_one_period_returns_phase_and_matches_integration():
    rec = circular_record(e=0.001)
    s0 = orbital.propagate_two_body(rec, rec.epoch)
    t1 = rec.epoch + dt.timedelta(seconds=s0.period)
    s1 = orbital.propagate_two_body(rec, t1)
    assert abs((s1.phase - s0.phase + 180.0) % 360.0 - 180.0) < 0.1
    # velocity at epoch from a centred difference of the analytic model
    h = 0.01
    rp = np.array(orbital.propagate_two_body(rec, rec.epoch + dt.timedelta(seconds=h)).position)
    rm = np.array(orbital.propagate_two_body(rec, rec.epoch - dt.timedelta(seconds=h)).position)
    v0 = (rp - rm) / (2 * h)
    r_int = oracles.two_body_integrate(np.array(s0.position), v0, 1800.0)
    r_mod = np.array(orbital.propagate_two_body(rec, rec.epoch + dt.timedelta(seconds=1800.0)).position)
    assert np.linalg.norm(r_int - r_mod) < 0.05  # km


def test_phase_continuity_and_radius():
    rec = circular_record(e=0.005)
    phases = [orbital.propagate_two_body(rec, rec.epoch + dt.timedelta(seconds=k)).phase for k in range(0, 120)]
    steps = np.abs((np.diff(phases) + 180.0) % 360.0 - 180.0)
    assert steps.max() < 0.2
    s = orbital.propagate_two_body(rec, rec.epoch + dt.timedelta(seconds=777))
    r = np.linalg.norm(s.position)
    assert r == pytest.approx(s.semi_major_axis, rel=0.005)


def test_sgp4_propagation_matches_library_position():
    from sgp4.api import Satrec

    rec = parse_tle_lines(ISS_LINE1, ISS_LINE2)
    t = rec.epoch + dt.timedelta(hours=3)
    state = orbital.propagate(rec, t)
    sat = Satrec.twoline2rv(ISS_LINE1, ISS_LINE2)
    jd, fr = orbital.julian_date(t)
    err, r, _ = sat.sgp4(jd, fr)
    assert err == 0
    assert np.allclose(state.position, r, atol=1e-6)
    assert 380 < state.mean_altitude < 440
    assert 0 <= state.phase < 360


def test_sgp4_decayed_orbit_raises():
    rec = replace(circular_record(n=16.4, e=0.03), bstar=0.0)
    with pytest.raises(orbital.PropagationError):
        orbital.propagate(rec, rec.epoch)


def test_best_multiple_exhaustive():
    assert orbital.best_multiple(5700.0) == 15
    for period in (5700.0, 5760.0, 5555.5, 6001.0):
        best = min(range(1, 21), key=lambda m: abs(m * period - 86400))
        assert orbital.best_multiple(period) == best


def test_aligned_ticks():
    start = dt.datetime(2024, 1, 1, 12, tzinfo=UTC)
    clock = orbital.aligned_ticks(5760.0, start, 4)
    assert all((b - a).total_seconds() == 86400.0 for a, b in zip(clock.ticks, clock.ticks[1:]))
    clock = orbital.aligned_ticks(5700.0, start, 3)
    assert (clock.ticks[1] - clock.ticks[0]).total_seconds() == 85500.0
    assert len(orbital.aligned_ticks(5700.0, start, 2).ticks) == 2
    with pytest.raises(ValueError):
        orbital.aligned_ticks(3000.0, start, 3)
    with pytest.raises(ValueError):
        orbital.aligned_ticks(5700.0, start, 1)


def test_secular_rates_sign():
    raan, argp = orbital.secular_rates(6928.0, 0.0, 53.0)
    assert raan < 0  # prograde orbits regress
    raan_polar, _ = orbital.secular_rates(6928.0, 0.0, 90.0)
    assert abs(raan_polar) < 1e-15
    # about -4.5 deg/day at 550 km, 53 deg
    assert raan * 86400 == pytest.approx(-4.5, abs=0.2)
    assert math.isfinite(argp)
