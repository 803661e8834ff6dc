import datetime as dt

import numpy as np
import pytest

from leoforensics import shells, synth
from leoforensics.ingest import SatCatEntry
from leoforensics.store import DailyStateTable

from conftest import walker_table


def flat_table(date, incl, alt, raan=None, start_id=1):
    incl = np.asarray(incl, dtype=float)
    n_sat = len(incl)
    alt = np.broadcast_to(np.asarray(alt, dtype=float), incl.shape)
    raan = np.zeros(n_sat) if raan is None else np.asarray(raan, dtype=float)
    n = 86400.0 / (2 * np.pi) * np.sqrt(398600.4418 / (6378.137 + alt) ** 3)
    z = np.zeros(n_sat)
    return DailyStateTable.from_elements(date, start_id + np.arange(n_sat), incl, raan, z, z,
                                         np.linspace(0, 359, n_sat), n)


def test_nine_shell_closure():
    res = synth.generate(synth.SynthConfig(synth.observed_shells(), days=1))
    truth = {int(k): v["shell"] for k, v in res.truth["satellites"].items()}
    asg = shells.detect_shells(res.tables[0])
    assert len(asg.shells) == 9
    assert all(s is not None and s.label == truth[n] for n, s in asg.labels.items())
    planes = shells.planes_by_shell(res.tables[0], asg)
    expected = {s["label"]: s["planes"] for s in res.truth["shells"]}
    assert {s.label: p.n_planes for s, p in planes.items()} == expected


def test_below_min_samples_all_noise(day0):
    asg = shells.detect_shells(flat_table(day0, [53.0] * 24, 550.0))
    assert asg.shells == () and all(v is None for v in asg.labels.values())


def test_close_inclinations_merge(day0):
    incl = [53.0] * 30 + [53.05] * 30
    asg = shells.detect_shells(flat_table(day0, incl, 550.0))
    assert len(asg.shells) == 1


def test_permutation_and_duplication_invariance(day0):
    t = flat_table(day0, [53.0] * 30 + [43.0] * 40, [550.0] * 30 + [560.0] * 40)
    base = shells.detect_shells(t)
    perm = t.take(np.random.default_rng(1).permutation(len(t)))
    assert shells.detect_shells(perm).labels == base.labels
    with pytest.raises(ValueError):  # the table itself refuses duplicate rows
        t.take(np.concatenate([np.arange(len(t)), [0, 5]]))
    counts = base.counts()
    assert sum(counts.values()) == len(t)


def test_shell_label_and_match(day0):
    asg = shells.detect_shells(flat_table(day0, [53.2] * 30, 484.0))
    assert asg.shells[0].label == "53.2/484"
    assert shells.match_shell(asg, "53.2/480") == asg.shells[0]
    assert shells.match_shell(asg, "53.0/484") is None
    with pytest.raises(ValueError):
        shells.parse_label("shell one")


def test_planes_72_with_jitter_and_extra_batch(day0):
    cfg = synth.SynthConfig((synth.ShellSpec(53.0, 1584, 72, 11, 550.0),), days=1, raan_jitter=0.05, seed=4)
    table = synth.generate(cfg).tables[0]
    assert shells.detect_planes(table).n_planes == 72
    extra = [(90000 + k, 2.5, 10.0 * k) for k in range(5)]  # between planes at 0 and 5 deg
    t2 = walker_table(day0, 72, 22, 11, extra=extra)
    pa = shells.detect_planes(t2)
    assert pa.n_planes == 73
    for p in range(pa.n_planes):
        r = t2.select(pa.members(p)).raan_deg
        spread = np.max(np.abs((r - pa.plane_raan_centers[p] + 180.0) % 360.0 - 180.0))
        assert spread <= 2.0


def test_plane_wraparound(day0):
    t = flat_table(day0, [53.0] * 6, 550.0, raan=[359.9, 0.1, 359.95, 0.05, 180.0, 180.1])
    pa = shells.detect_planes(t)
    assert pa.n_planes == 1
    assert pa.labels[5] is None and pa.labels[6] is None  # two-satellite group is transit


def test_shell_timeseries_deorbits_and_flat():
    cfg = synth.SynthConfig((synth.ShellSpec(53.0, 200, 10, 1, 550.0),), days=10,
                            deorbits=tuple(synth.Deorbit(44000 + k, 4) for k in range(20)))
    res = synth.generate(cfg)
    ts = shells.shell_timeseries([shells.detect_shells(t) for t in res.tables], res.satcat)
    # the deorbit day is the catalog decay date: active drops and decayed rises that day
    assert ts.active == [200] * 4 + [180] * 6
    assert ts.cumulative_decayed[3] + 20 == ts.cumulative_decayed[4]
    assert ts.tracks[0].counts[res.tables[4].date] == 200
    assert ts.tracks[0].counts[res.tables[5].date] == 180
    assert len(ts.tracks) == 1
    flat = shells.shell_timeseries([shells.detect_shells(t) for t in res.tables[:4]])
    assert len(set(flat.tracks[0].counts.values())) == 1


def test_generation_breakdown(day0):
    t = flat_table(day0, [53.0] * 30, 552.0)
    asg = shells.detect_shells(t)
    satcat = [SatCatEntry(n, "STARLINK-%d" % n, day0, None) for n in range(1, 30)]
    satcat.append(SatCatEntry(30, "MYSTERY", day0, None))
    mapping = [("STARLINK", "v1")]
    out = shells.generation_breakdown(asg, satcat, mapping)[asg.shells[0]]
    assert out == {"v1": 29, "unknown": 1}
    assert sum(out.values()) == 30


def test_compare_filed_offset_and_shortfall():
    observed = {shells.ShellId.from_centers(43.0, 559.0): 1500}
    spec = shells.FiledShellSpec(43.0, 530.0, 36, 44)
    report = shells.compare_filed(observed, [spec])
    dv = report.deviations[0]
    assert dv.delta_altitude == 29.0 and dv.flagged
    assert spec.total == 1584 and dv.shortfall == 84


def test_compare_filed_exact_match():
    s = shells.ShellId.from_centers(53.0, 550.0)
    report = shells.compare_filed({s: 1584}, [shells.FiledShellSpec(53.0, 550.0, 72, 22)])
    dv = report.deviations[0]
    assert (dv.delta_inclination, dv.delta_altitude, dv.shortfall, dv.flagged) == (0.0, 0.0, 0, False)
    assert shells.load_filed_shells()  # bundled reference data loads
