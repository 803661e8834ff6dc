import datetime as dt

import numpy as np
import pytest

from leoforensics import synth
from leoforensics.store import DailyStateTable

ISS_LINE1 = "1 25544U 98067A   19343.69339541  .00001764  00000-0  38792-4 0  9991"
ISS_LINE2 = "2 25544  51.6439 211.2001 0007417  17.6667  85.6398 15.50103472202482"


def walker_table(date, P, S, F, incl=53.0, alt=550.0, start_id=1000, raan0=0.0, u0=0.0,
                 drop=(), extra=None):
    """One day's circular Walker shell as a DailyStateTable, slot-major ids."""
    T = P * S
    p = np.repeat(np.arange(P), S)
    s = np.tile(np.arange(S), P)
    u = np.mod(u0 + 360.0 * s / S + 360.0 * F * p / T, 360.0)
    raan = np.mod(raan0 + 360.0 * p / P, 360.0)
    ids = start_id + np.arange(T)
    keep = ~np.isin(ids, list(drop))
    ids, u, raan = ids[keep], u[keep], raan[keep]
    incl_a = np.full(len(ids), incl)
    n = np.full(len(ids), 86400.0 / (2 * np.pi) * np.sqrt(398600.4418 / (6378.137 + alt) ** 3))
    if extra:
        ids = np.append(ids, [e[0] for e in extra])
        raan = np.append(raan, [e[1] for e in extra])
        u = np.append(u, [e[2] for e in extra])
        incl_a = np.append(incl_a, [incl] * len(extra))
        n = np.append(n, [n[0]] * len(extra))
    z = np.zeros(len(ids))
    return DailyStateTable.from_elements(date, ids, incl_a, raan, z, z, u, n)


@pytest.fixture
def day0():
    return dt.date(2024, 1, 1)


@pytest.fixture(scope="session")
def small_synth():
    """Six days of one noisy 18x22 shell with a twin, a maneuver, a conjunction and a launch."""
    cfg = synth.SynthConfig(
        shells=(synth.ShellSpec(53.0, 396, 18, 5, 550.0, companions=((0, 3, 5.2), (4, 7, 5.2))),),
        days=6,
        noise=synth.NoiseSpec(),
        maneuvers=(synth.Maneuver(44010, 2, 2, dh_per_day=2.0),),
        launches=(synth.Launch(0, 2, 5, 0, ascent_days=3),),
        conjunctions=(synth.Conjunction(44010, 2.3, 1e-5),),
        seed=3,
    )
    return synth.generate(cfg)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 8):
        line = mod.RESULTS.get(n)
        if line is None:
            line = f"criterion {n}: " + ("SKIPPED - LEOFORENSICS_REAL_DATA not set" if n == 7 else "NOT RUN")
        terminalreporter.write_line(line)
