"""Mean-element conversions, SGP4 propagation and phase-aligned daily clocks."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from sgp4.api import WGS72, Satrec

MU_KM3_S2 = 398600.4418
R_EARTH_KM = 6378.137
J2 = 1.08262668e-3
SECONDS_PER_DAY = 86400.0
SPEED_OF_LIGHT_KM_S = 299792.458
DECAY_ALTITUDE_KM = 100.0

_SGP4_EPOCH_JD = 2433281.5  # 1949-12-31 00:00 UT
_UNIX_EPOCH_JD = 2440587.5
_REV_PER_DAY_TO_RAD_PER_MIN = 2.0 * math.pi / 1440.0


class PropagationError(RuntimeError):
    """Propagation could not produce a valid state."""


class DecayError(PropagationError):
    """Orbit has decayed below the re-entry altitude."""


class DivergenceError(PropagationError):
    """Eccentricity left [0, 1) during propagation."""


class ElementSet(Protocol):
    norad_id: int
    epoch: dt.datetime
    inclination: float
    raan: float
    eccentricity: float
    arg_perigee: float
    mean_anomaly: float
    mean_motion: float
    bstar: float
    mean_motion_dot: float
    mean_motion_ddot: float


@dataclass(frozen=True)
class OrbitalState:
    norad_id: int
    t: dt.datetime
    inclination: float
    raan: float
    eccentricity: float
    arg_perigee: float
    mean_anomaly: float
    mean_motion: float
    semi_major_axis: float
    mean_altitude: float
    apogee_altitude: float
    phase: float
    period: float
    position: tuple[float, float, float]


@dataclass(frozen=True)
class ReferenceClock:
    shell_period: float
    start: dt.datetime
    ticks: tuple[dt.datetime, ...]


def semi_major_axis(mean_motion):
    """Semi-major axis in km from mean motion in rev/day (scalar or array)."""
    period = SECONDS_PER_DAY / (2.0 * np.pi * np.asarray(mean_motion, dtype=float))
    a = np.cbrt(MU_KM3_S2 * period**2)
    return float(a) if np.ndim(a) == 0 else a


def mean_motion_from_altitude(altitude_km):
    """Inverse of :func:`semi_major_axis` for a circular orbit, rev/day."""
    a = R_EARTH_KM + np.asarray(altitude_km, dtype=float)
    n = SECONDS_PER_DAY / (2.0 * np.pi) * np.sqrt(MU_KM3_S2 / a**3)
    return float(n) if np.ndim(n) == 0 else n


def _eccentric_anomaly(M, e, max_iter=50, tol=1e-14):
    M = np.asarray(M, dtype=float)
    e = np.asarray(e, dtype=float)
    E = np.where(e < 0.8, M, np.pi + np.zeros_like(M))
    for _ in range(max_iter):
        f = E - e * np.sin(E) - M
        step = f / (1.0 - e * np.cos(E))
        E = E - step
        if np.all(np.abs(step) < tol):
            return E
    residual = E - e * np.sin(E) - M
    if np.any(np.abs(residual) > 1e-10):
        raise PropagationError("Kepler's equation did not converge")
    return E


def true_anomaly(mean_anomaly_deg, eccentricity):
    """Vectorized true anomaly in degrees [0, 360) from mean anomaly in degrees."""
    M = np.radians(np.mod(mean_anomaly_deg, 360.0))
    e = np.asarray(eccentricity, dtype=float)
    E = _eccentric_anomaly(M, e)
    nu = 2.0 * np.arctan2(np.sqrt(1.0 + e) * np.sin(E / 2.0), np.sqrt(1.0 - e) * np.cos(E / 2.0))
    return np.mod(np.degrees(nu), 360.0)


def solve_true_anomaly(mean_anomaly_deg: float, eccentricity: float) -> float:
    """True anomaly (deg) for a mean anomaly (deg) and eccentricity in [0, 0.1]."""
    if not 0.0 <= eccentricity < 1.0:
        raise ValueError(f"eccentricity {eccentricity} outside [0, 1)")
    return float(true_anomaly(mean_anomaly_deg, eccentricity))


def positions(a, e, inclination_deg, raan_deg, phase_deg, true_anomaly_deg):
    """Inertial position (km) from elements; arrays broadcast, returns (..., 3)."""
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    nu = np.radians(true_anomaly_deg)
    r = a * (1.0 - e**2) / (1.0 + e * np.cos(nu))
    i = np.radians(inclination_deg)
    raan = np.radians(raan_deg)
    u = np.radians(phase_deg)
    cu, su = np.cos(u), np.sin(u)
    co, so = np.cos(raan), np.sin(raan)
    ci, si = np.cos(i), np.sin(i)
    x = r * (co * cu - so * su * ci)
    y = r * (so * cu + co * su * ci)
    z = r * (su * si)
    return np.stack([x, y, z], axis=-1)


def derive_elements(
    norad_id: int,
    t: dt.datetime,
    inclination: float,
    raan: float,
    eccentricity: float,
    arg_perigee: float,
    mean_anomaly: float,
    mean_motion: float,
    position: tuple[float, float, float] | None = None,
) -> OrbitalState:
    """Fill altitude, phase, period and (unless given) position from mean elements."""
    if mean_motion <= 0:
        raise ValueError("mean motion must be positive")
    a = semi_major_axis(mean_motion)
    nu = solve_true_anomaly(mean_anomaly, eccentricity)
    u = math.fmod(arg_perigee + nu, 360.0)
    if u < 0:
        u += 360.0
    if position is None:
        position = tuple(float(c) for c in positions(a, eccentricity, inclination, raan, u, nu))
    return OrbitalState(
        norad_id=norad_id,
        t=t,
        inclination=inclination,
        raan=raan % 360.0,
        eccentricity=eccentricity,
        arg_perigee=arg_perigee % 360.0,
        mean_anomaly=mean_anomaly % 360.0,
        mean_motion=mean_motion,
        semi_major_axis=a,
        mean_altitude=a - R_EARTH_KM,
        apogee_altitude=a * (1.0 + eccentricity) - R_EARTH_KM,
        phase=u,
        period=SECONDS_PER_DAY / mean_motion,
        position=position,
    )


def julian_date(t: dt.datetime) -> tuple[float, float]:
    """Split Julian date (whole, fraction) for a timezone-aware UTC datetime."""
    if t.tzinfo is None:
        raise ValueError("timestamps must be timezone-aware (UTC)")
    seconds = (t - dt.datetime(1970, 1, 1, tzinfo=dt.timezone.utc)).total_seconds()
    days, frac = divmod(seconds / SECONDS_PER_DAY, 1.0)
    return _UNIX_EPOCH_JD + days, frac


def _satrec(record: ElementSet) -> Satrec:
    jd, fr = julian_date(record.epoch)
    sat = Satrec()
    sat.sgp4init(
        WGS72,
        "i",
        int(record.norad_id) % 340000,
        (jd - _SGP4_EPOCH_JD) + fr,
        record.bstar,
        record.mean_motion_dot / (1440.0 / (2.0 * math.pi) * 1440.0),
        record.mean_motion_ddot / (1440.0 / (2.0 * math.pi) * 1440.0 * 1440.0),
        record.eccentricity,
        math.radians(record.arg_perigee),
        math.radians(record.inclination),
        math.radians(record.mean_anomaly),
        record.mean_motion * _REV_PER_DAY_TO_RAD_PER_MIN,
        math.radians(record.raan),
    )
    return sat


def propagate(record: ElementSet, t: dt.datetime) -> OrbitalState:
    """SGP4-propagate a TLE record to ``t``.

    Angles in the returned state are SGP4's secularly updated mean elements at
    ``t``; the reported mean motion keeps the catalog (Kozai) convention, scaled
    by SGP4's drag-induced change. The position is SGP4's TEME position.
    """
    sat = _satrec(record)
    jd, fr = julian_date(t)
    err, r, _ = sat.sgp4(jd, fr)
    if err == 6:
        raise DecayError(f"{record.norad_id}: orbit decayed")
    if err in (1, 3):
        raise DivergenceError(f"{record.norad_id}: eccentricity out of range (sgp4 code {err})")
    if err != 0:
        raise PropagationError(f"{record.norad_id}: sgp4 error code {err}")
    n = record.mean_motion * sat.nm / sat.no
    state = derive_elements(
        record.norad_id,
        t,
        math.degrees(sat.im),
        math.degrees(sat.Om),
        float(sat.em),
        math.degrees(sat.om),
        math.degrees(sat.mm),
        n,
        position=(float(r[0]), float(r[1]), float(r[2])),
    )
    perigee = state.semi_major_axis * (1.0 - state.eccentricity) - R_EARTH_KM
    if perigee < DECAY_ALTITUDE_KM:
        raise DecayError(f"{record.norad_id}: perigee {perigee:.1f} km below {DECAY_ALTITUDE_KM} km")
    return state


def propagate_two_body(record: ElementSet, t: dt.datetime) -> OrbitalState:
    """Unperturbed Keplerian propagation (for synthetic orbits and tests)."""
    dt_s = (t - record.epoch).total_seconds()
    mean_anomaly = record.mean_anomaly + 360.0 * record.mean_motion * dt_s / SECONDS_PER_DAY
    return derive_elements(
        record.norad_id,
        t,
        record.inclination,
        record.raan,
        record.eccentricity,
        record.arg_perigee,
        mean_anomaly % 360.0,
        record.mean_motion,
    )


def secular_rates(a, e, inclination_deg):
    """J2 secular drift of RAAN and argument of perigee, deg/s."""
    a = np.asarray(a, dtype=float)
    e = np.asarray(e, dtype=float)
    n = np.sqrt(MU_KM3_S2 / a**3)
    p = a * (1.0 - e**2)
    k = 1.5 * n * J2 * (R_EARTH_KM / p) ** 2
    cos_i = np.cos(np.radians(inclination_deg))
    raan_rate = -k * cos_i
    argp_rate = 0.5 * k * (5.0 * cos_i**2 - 1.0)
    return np.degrees(raan_rate), np.degrees(argp_rate)


def best_multiple(shell_period: float, target: float = SECONDS_PER_DAY) -> int:
    """Positive integer m minimizing |m * shell_period - target|."""
    m = max(1, int(round(target / shell_period)))
    candidates = [c for c in (m - 1, m, m + 1) if c >= 1]
    return min(candidates, key=lambda c: (abs(c * shell_period - target), c))


def aligned_ticks(shell_period: float, start: dt.datetime, n_days: int) -> ReferenceClock:
    """Daily reference instants spaced by whole shell periods, as close to 24 h as possible."""
    if not 4800.0 < shell_period < 8000.0:
        raise ValueError(f"shell period {shell_period} s outside the LEO range (4800, 8000)")
    if n_days < 2:
        raise ValueError("need at least two days")
    step = best_multiple(shell_period) * shell_period
    ticks = tuple(start + dt.timedelta(seconds=k * step) for k in range(n_days))
    return ReferenceClock(shell_period=shell_period, start=start, ticks=ticks)
