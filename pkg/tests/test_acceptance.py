"""Acceptance suite: one PASS/FAIL line per criterion, printed at the end of the pytest run.

Criteria 1-6 run on synthetic constellations. Criterion 7 needs real catalog
data and runs only when LEOFORENSICS_REAL_DATA names a run config for it.
"""

import csv
import dataclasses
import datetime as dt
import json
import os
import time
import warnings

import numpy as np
import pytest

from leoforensics import cli, lifecycle, movement, netsim, shells, structure, synth
from leoforensics.synth import Maneuver, NoiseSpec, ShellSpec, SynthConfig

import oracles
from conftest import walker_table

RESULTS: dict[int, str] = {}


def record(n: int, checks: dict[str, bool], detail: str) -> None:
    failed = [name for name, ok in checks.items() if not ok]
    status = "PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"
    RESULTS[n] = f"criterion {n}: {status} - {detail}"
    assert not failed, RESULTS[n]


def test_criterion_1_oracle_closure():
    t0 = time.perf_counter()
    res = synth.generate(SynthConfig(synth.observed_shells(), days=100))
    truth = {int(k): v["shell"] for k, v in res.truth["satellites"].items()}
    planes_truth = {s["label"]: s["planes"] for s in res.truth["shells"]}
    n_shells, misassigned, plane_errors = set(), 0, 0
    for table in res.tables:
        asg = shells.detect_shells(table)
        n_shells.add(len(asg.shells))
        misassigned += sum(s is None or s.label != truth[n] for n, s in asg.labels.items())
        for shell, pa in shells.planes_by_shell(table, asg).items():
            plane_errors += pa.n_planes != planes_truth.get(shell.label, -1)
    elapsed = time.perf_counter() - t0
    n_sat = len(res.tables[0])
    record(1, {"9 shells": n_shells == {9}, "0 misassignments": misassigned == 0,
               "plane counts": plane_errors == 0, "< 60 s": elapsed < 60.0},
           f"{len(res.tables)} days x {n_sat} satellites, shells/day {sorted(n_shells)}, "
           f"misassigned {misassigned}, plane errors {plane_errors}, {elapsed:.1f} s")


def test_criterion_2_walker_recovery():
    cfg = SynthConfig((ShellSpec(53.0, 1296, 72, 45, 550.0),), days=1, phase_jitter=0.3, seed=21)
    table = synth.generate(cfg).tables[0]
    planes = shells.detect_planes(table)
    profiles = structure.shell_profiles(table, planes)
    g = structure.estimate_regular_spacing(list(profiles.values()))
    per_plane = {p: structure.classify(prof, g) for p, prof in profiles.items()}
    w = structure.walker_from_shell(table, planes, per_plane, g)
    record(2, {"F = 45": w.F == 45, "dphi 12.5 +- 0.25": abs(w.delta_phi - 12.5) <= 0.25},
           f"T={w.T} P={w.P} F={w.F} dphi={w.delta_phi:.3f} deg (g={g:.3f})")


# (inclination, altitude, sats per plane, twin separation) for five shells
CLASSIFY_SHELLS = [(53.0, 552.0, 18, 5.2), (70.0, 570.0, 16, 0.9), (97.6, 557.0, 36, 1.4),
                   (43.0, 559.0, 60, 1.6), (53.2, 540.0, 18, 5.0)]


def test_criterion_3_classification():
    checks, parts = {}, []
    for inc, alt, S, sep in CLASSIFY_SHELLS:
        P = 12
        comps = tuple((p, (3 * p + 1) % S, sep) for p in range(0, P, 2))
        cfg = SynthConfig((ShellSpec(inc, P * S, P, 1, alt, companions=comps),), days=1, phase_jitter=0.1, seed=4)
        res = synth.generate(cfg)
        table = res.tables[0]
        planes = shells.detect_planes(table)
        profiles = structure.shell_profiles(table, planes)
        g = structure.estimate_regular_spacing(list(profiles.values()))
        classes = structure.merged_classes({p: structure.classify(prof, g) for p, prof in profiles.items()})
        truth = {int(k): v["class"] for k, v in res.truth["satellites"].items()}
        agree = sum(classes.get(n, None) is not None and classes[n].value == c for n, c in truth.items())
        label = f"{inc}/{alt:.0f}"
        checks[f"{label} agreement"] = agree == len(truth)
        checks[f"{label} spacing"] = abs(g - 360.0 / S) <= 0.5
        parts.append(f"{label} g={g:.2f} agree {agree}/{len(truth)}")
    record(3, checks, "; ".join(parts))


def test_criterion_4_kaplan_meier():
    rng = np.random.default_rng(44)
    worst = 0.0
    for _ in range(200):
        d = rng.integers(0, 100, size=rng.integers(1, 51))
        curve = lifecycle.kaplan_meier(d, np.zeros(len(d), bool))
        worst = max(worst, float(np.max(np.abs(curve.S - oracles.empirical_survival(d, int(d.max()))))))
    hand = lifecycle.kaplan_meier([5, 5, 8] + [10] * 7, [False] * 3 + [True] * 7)
    hand_err = max(abs(hand.at(5) - 0.8), abs(hand.at(8) - 0.7), abs(hand.at(10) - 0.7))
    p = 0.001
    durations = np.random.default_rng(2024).geometric(p, size=10_000) - 1
    censored = durations > 1500
    rate = lifecycle.baseline_rate(lifecycle.kaplan_meier(np.minimum(durations, 1500), censored))
    record(4, {"empirical oracle": worst <= 1e-12, "hand example": hand_err <= 1e-12,
               "baseline within 10%": abs(rate - p) / p < 0.10},
           f"max |S - oracle| {worst:.1e}, hand error {hand_err:.1e}, baseline {rate:.6f}/day vs {p}")


def _detect(res, labels):
    flags, trials = [], 0
    assignments = {t.date: shells.detect_shells(t) for t in res.tables}
    for label in labels:
        members = {d: a.members(shells.match_shell(a, label)) for d, a in assignments.items()}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            f, deltas = movement.detect_range(res.tables, members)
        flags += f
        trials += sum(len(x) for x in deltas)
    return flags, trials


RECALL_SHELLS = (ShellSpec(53.0, 1440, 72, 17, 550.0), ShellSpec(43.0, 1080, 36, 11, 560.0, raan0=3.0),
                 ShellSpec(70.0, 960, 40, 7, 570.0, raan0=5.0))


def _recall(lo, hi, seed):
    rng = np.random.default_rng(seed)
    noise = NoiseSpec()
    total = sum(s.total for s in RECALL_SHELLS)
    mans = []
    for n in rng.choice(total, 200, replace=False) + synth.BASE_NORAD_ID:
        dur = int(rng.integers(3, 6))
        start = int(rng.integers(1, 101 - dur))
        k, kind = rng.uniform(lo, hi), rng.integers(3)
        kw = {}
        if kind in (0, 2):
            kw["dh_per_day"] = k * noise.sigma_h * rng.choice([-1, 1])
        if kind in (1, 2):
            kw["du_per_day"] = k * noise.sigma_u * rng.choice([-1, 1])
        mans.append(Maneuver(int(n), start, dur, **kw))
    res = synth.generate(SynthConfig(RECALL_SHELLS, days=101, noise=noise, maneuvers=tuple(mans), seed=seed))
    flags, _ = _detect(res, [s.label for s in RECALL_SHELLS])
    start = res.config.start
    window = {m.norad_id: (start + dt.timedelta(m.start), start + dt.timedelta(m.end)) for m in mans}
    hit = {e.norad_id for e in movement.streaks(flags)
           if e.norad_id in window and e.start <= window[e.norad_id][1] and e.end >= window[e.norad_id][0]}
    return len(hit) / len(mans)


SCRIPT = [
    # (norad offset, start, duration, conjunction day or None, probability, expected)
    (10, 5, 2, 5.4, 1e-5, "COLLISION_AVOIDANCE"),
    (20, 5, 2, 4.0, 1e-5, "COLLISION_AVOIDANCE"),
    (30, 20, 2, 22.9, 1e-5, "COLLISION_AVOIDANCE"),
    (40, 20, 2, 23.1, 1e-5, "OTHER"),
    (50, 20, 2, 20.5, 1e-7, "OTHER"),
    (60, 10, 2, None, 0.0, "INITIAL_POSITIONING"),
    (70, 15, 2, None, 0.0, "INITIAL_POSITIONING"),
    (80, 16, 2, None, 0.0, "OTHER"),
    (90, 3, 2, 3.2, 1e-4, "COLLISION_AVOIDANCE"),
]


def _scripted():
    base = synth.BASE_NORAD_ID
    mans = tuple(Maneuver(base + o, s, d, dh_per_day=0.5) for o, s, d, *_ in SCRIPT)
    conj = tuple(synth.Conjunction(base + o, c, p) for o, _, _, c, p, _ in SCRIPT if c is not None)
    cfg = SynthConfig((ShellSpec(53.0, 400, 20, 3, 550.0),), days=30, noise=NoiseSpec(),
                      maneuvers=mans, conjunctions=conj, seed=8)
    res = synth.generate(cfg)
    flags, _ = _detect(res, ["53.0/550"])
    first = {int(k): dt.date.fromisoformat(v["first_seen"]) for k, v in res.truth["satellites"].items()}
    events = movement.classify_all(movement.streaks(flags), movement.ConjunctionIndex(res.conjunctions), first)
    by_sat = {e.norad_id: e for e in events}
    exact = 0
    for (o, *_, expected), m in zip(SCRIPT, sorted(res.truth["maneuvers"], key=lambda m: m["norad_id"])):
        e = by_sat.get(base + o)
        exact += (e is not None and e.cause.value == expected == m["class"]
                  and (e.start.isoformat(), e.end.isoformat()) == (m["start"], m["end"]))
    return exact


def test_criterion_5_movement_detection():
    noise_only = synth.generate(SynthConfig((ShellSpec(53.0, 2000, 80, 13, 550.0),), days=175,
                                            noise=NoiseSpec(), seed=5))
    flags, trials = _detect(noise_only, ["53.0/550"])
    false_flags = len({(f.norad_id, f.date) for f in flags})
    strong = _recall(7.0, 10.0, 11)
    weak = _recall(5.0, 7.0, 12)
    exact = _scripted()
    record(5, {"recall >= 7 sigma": strong == 1.0, "recall 5-7 sigma": weak >= 0.95,
               "false flags <= 3": false_flags <= 3 and trials == 348_000,
               "scripted causes": exact == len(SCRIPT)},
           f"recall {strong:.3f} (7-10 sigma), {weak:.3f} (5-7 sigma); {false_flags} false flags "
           f"in {trials} trials; scripted causes {exact}/{len(SCRIPT)}")


def test_criterion_6_topology():
    d0 = dt.date(2024, 1, 1)
    d1 = d0 + dt.timedelta(days=1)
    equal = True
    for F in (0, 11, 39):
        table = walker_table(d0, 72, 22, F)
        pg = netsim.build_pgrid(table, shells.detect_planes(table))
        grid = netsim.build_grid(72, 22, F, node_ids=1000 + np.arange(1584))
        equal &= pg.edge_set() == grid.edge_set()
    delay = netsim.route_metrics(netsim.build_grid(72, 22, 0, 53.0, 550.0)).avg_delay_ms
    full = walker_table(d0, 72, 22, 0)
    less = walker_table(d1, 72, 22, 0, drop=(1000 + 30 * 22 + 7,))
    churn = netsim.link_churn([full, less], {d0: shells.detect_planes(full), d1: shells.detect_planes(less)})
    day = churn.days[0]
    record(6, {"pGrid == grid": equal, "delay within 5% of 60.6": abs(delay - 60.6) / 60.6 <= 0.05,
               "4 missing-satellite failures": (day.missing_satellite, day.repositioned) == (4, 0)},
           f"edge sets equal for F in (0, 11, 39): {equal}; grid delay {delay:.3f} ms; "
           f"removal failures {day.missing_satellite} missing, {day.repositioned} repositioned")


REAL = os.environ.get("LEOFORENSICS_REAL_DATA")


@pytest.mark.skipif(not REAL, reason="set LEOFORENSICS_REAL_DATA to a run config for the real catalog")
def test_criterion_7_real_data(tmp_path):
    base = dataclasses.replace(cli.load_config(REAL), shells=["53.0/550", "53.2/484"])
    full = cli.run_pipeline(dataclasses.replace(base, out=tmp_path / "full"))
    summary = json.loads((full / "summary.json").read_text())
    comp = [r for r in _csv(full / "composition.csv") if r["shell"] == "53.0/550" and r["date"] >= "2022-01-01"]
    g = float(comp[-1]["regular_spacing"]) if comp else float("nan")
    regular = float(np.mean([float(r["regular"]) for r in comp])) if comp else float("nan")
    baseline = summary["lifecycle"]["baseline_rate"] or float("nan")
    causes = summary["movement"].get("53.2/484", {}).get("causes", {})
    ca = causes.get("COLLISION_AVOIDANCE", 0) / max(sum(causes.values()), 1)
    year = cli.run_pipeline(dataclasses.replace(base, out=tmp_path / "y2024", shells=["53.0/550"],
                                                date_from="2024-01-01", date_to="2024-12-31"))
    churn = json.loads((year / "summary.json").read_text())["churn"]
    rate_all = churn.get("53.0/550 all", {}).get("mean_rate", float("nan"))
    rate_reg = churn.get("53.0/550 regular", {}).get("mean_rate", float("nan"))
    record(7, {"spacing 20 +- 0.5": abs(g - 20.0) <= 0.5, "regular 0.70-0.85": 0.70 <= regular <= 0.85,
               "baseline 0.008-0.02 %/day": 8e-5 <= baseline <= 2e-4, "CA share 79.4 +- 10 pp": abs(ca - 0.794) <= 0.10,
               "churn all 1.63 +- 0.5 pp": abs(rate_all - 0.0163) <= 0.005,
               "churn regular 1.04 +- 0.5 pp": abs(rate_reg - 0.0104) <= 0.005},
           f"g={g:.2f}, regular {regular:.3f}, baseline {baseline * 100:.4f}%/day, CA share {ca:.3f}, "
           f"churn {rate_all * 100:.2f}% all / {rate_reg * 100:.2f}% regular")


def _csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))
