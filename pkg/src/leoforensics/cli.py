"""Command-line entry point and the end-to-end report pipeline."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import logging
import sys
import warnings
from collections import Counter
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import ingest, lifecycle, movement, netsim, shells, store, structure, synth
from .config import RunConfig, Thresholds, load_config, thresholds_from_mapping

log = logging.getLogger("leoforensics")


class InputError(RuntimeError):
    """A required input is missing or unusable."""


# ---------------------------------------------------------------- CSV output

def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return ""
        return f"{float(value):.6f}"
    if isinstance(value, (dt.date, dt.datetime)):
        return value.isoformat()
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


# ---------------------------------------------------------------- analysis context

def _date(text: str | None) -> dt.date | None:
    return None if text is None else dt.date.fromisoformat(str(text))


class Analysis:
    """Loaded snapshots plus cached per-day shell, plane and class results."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.th: Thresholds = cfg.thresholds
        if not Path(cfg.store).is_dir():
            raise InputError(f"snapshot store not found: {cfg.store} (run `leoforensics ingest` or `synth` first)")
        dates = store.available_dates(cfg.store)
        lo, hi = _date(cfg.date_from), _date(cfg.date_to)
        self.dates = [d for d in dates if (lo is None or d >= lo) and (hi is None or d <= hi)]
        self.tables = {d: store.read_table(Path(cfg.store) / f"{d.isoformat()}.csv") for d in self.dates}
        self.satcat = self._load_satcat()
        self.conjunctions = self._load_conjunctions()
        self._assign: dict[dt.date, shells.ShellAssignment] = {}
        self._planes: dict[tuple[dt.date, str], shells.PlaneAssignment | None] = {}
        self._classes: dict[tuple[dt.date, str], tuple[float | None, dict]] = {}

    def _load_satcat(self):
        if self.cfg.satcat is None:
            return None
        if not Path(self.cfg.satcat).exists():
            raise InputError(f"SatCat file not found: {self.cfg.satcat}")
        with open(self.cfg.satcat, encoding="utf-8") as fh:
            return ingest.parse_satcat(fh).records

    def _load_conjunctions(self):
        if self.cfg.conjunctions is None:
            return []
        if not Path(self.cfg.conjunctions).exists():
            raise InputError(f"conjunction file not found: {self.cfg.conjunctions}")
        with open(self.cfg.conjunctions, encoding="utf-8") as fh:
            return ingest.parse_conjunctions(fh).records

    @property
    def end(self) -> dt.date | None:
        return self.dates[-1] if self.dates else None

    def assignment(self, d: dt.date) -> shells.ShellAssignment:
        if d not in self._assign:
            self._assign[d] = shells.detect_shells(
                self.tables[d], self.th.shell_min_samples, self.th.shell_incl_threshold_deg,
                self.th.shell_alt_threshold_km, self.th.shell_altitude)
        return self._assign[d]

    def shell(self, d: dt.date, label: str) -> shells.ShellId | None:
        return shells.match_shell(self.assignment(d), label, self.th.shell_incl_threshold_deg,
                                  self.th.shell_alt_threshold_km)

    def selected_labels(self) -> list[str]:
        if self.cfg.shells:
            return list(self.cfg.shells)
        return [s.label for s in self.assignment(self.end).shells] if self.dates else []

    def members(self, d: dt.date, label: str) -> list[int]:
        s = self.shell(d, label)
        return [] if s is None else self.assignment(d).members(s)

    def planes(self, d: dt.date, label: str) -> shells.PlaneAssignment | None:
        key = (d, label)
        if key not in self._planes:
            s = self.shell(d, label)
            if s is None:
                self._planes[key] = None
            else:
                sub = self.tables[d].select(self.assignment(d).members(s))
                self._planes[key] = shells.detect_planes(sub, self.th.plane_raan_radius_deg,
                                                         self.th.min_plane_size, s)
        return self._planes[key]

    def classes(self, d: dt.date, label: str) -> tuple[float | None, dict[int, structure.PlaneClassification]]:
        key = (d, label)
        if key not in self._classes:
            planes = self.planes(d, label)
            result: tuple[float | None, dict] = (None, {})
            if planes is not None and planes.n_planes:
                profiles = structure.shell_profiles(self.tables[d], planes)
                try:
                    g = structure.estimate_regular_spacing(list(profiles.values()), self.th.twin_threshold_deg,
                                                           self.th.spacing_bin_deg, self.th.spacing_refine_deg)
                except structure.NoRegularStructure:
                    g = None
                if g is not None:
                    per_plane = {p: structure.classify(prof, g, self.th.twin_threshold_deg, self.th.regular_tol_deg)
                                 for p, prof in profiles.items()}
                    result = (g, per_plane)
            self._classes[key] = result
        return self._classes[key]

    def coverage(self) -> dict[int, tuple[dt.date, dt.date]]:
        cov: dict[int, tuple[dt.date, dt.date]] = {}
        for d in self.dates:
            for n in self.tables[d].norad_id.tolist():
                first = cov.get(n, (d, d))[0]
                cov[n] = (first, d)
        return cov


# ---------------------------------------------------------------- stages

def stage_shells(a: Analysis, out: Path) -> dict[str, Any]:
    for d in a.dates:
        asg = a.assignment(d)
        plane_of: dict[int, int | None] = {}
        for s in asg.shells:
            pl = a.planes(d, s.label)
            if pl is not None:
                plane_of.update(pl.labels)
        rows = [(n, asg.labels[n].label if asg.labels[n] else None, plane_of.get(n))
                for n in sorted(asg.labels)]
        write_csv(out / "shells" / f"{d.isoformat()}.csv", ["norad_id", "shell_label", "plane_index"], rows)

    ts = shells.shell_timeseries([a.assignment(d) for d in a.dates], a.satcat,
                                 a.th.shell_incl_threshold_deg, a.th.shell_alt_threshold_km)
    rows = []
    for k, d in enumerate(ts.dates):
        rows.append((d, "ALL", ts.active[k], ts.cumulative_launched[k], ts.cumulative_decayed[k]))
        for tr in ts.tracks:
            if d in tr.counts:
                rows.append((d, tr.labels.get(d, tr.label), tr.counts[d], None, None))
    write_csv(out / "population.csv", ["date", "shell", "active", "cumulative_launched", "cumulative_decayed"], rows)

    summary: dict[str, Any] = {"shells": []}
    if not a.dates:
        write_csv(out / "shell_table.csv", ["shell", "inclination", "altitude", "total"], [])
        write_csv(out / "filings.csv", ["filed_inclination", "filed_altitude", "filed_total"], [])
        return summary
    last = a.assignment(a.end)
    counts = last.counts()
    gens = shells.generation_breakdown(last, a.satcat or [], shells.load_generation_map(a.cfg.generations))
    names = sorted({g for c in gens.values() for g in c})
    rows = []
    for s in last.shells:
        pl = a.planes(a.end, s.label)
        rows.append((s.label, s.inclination_center, s.altitude_center, counts.get(s, 0),
                     pl.n_planes if pl else 0, *[gens[s].get(g, 0) for g in names]))
        summary["shells"].append({"label": s.label, "total": counts.get(s, 0), "planes": pl.n_planes if pl else 0})
    write_csv(out / "shell_table.csv", ["shell", "inclination", "altitude", "total", "planes", *names], rows)

    report = shells.compare_filed({s: counts.get(s, 0) for s in last.shells}, shells.load_filed_shells())
    rows = [
        (dv.spec.inclination, dv.spec.altitude, dv.spec.planes, dv.spec.sats_per_plane, dv.spec.total,
         dv.observed.label if dv.observed else None, dv.delta_inclination, dv.delta_altitude,
         dv.population, dv.shortfall, dv.flagged)
        for dv in report.deviations
    ]
    rows += [(None, None, None, None, None, s.label, None, None, counts.get(s, 0), None, None)
             for s in report.unmatched_observed]
    write_csv(out / "filings.csv", ["filed_inclination", "filed_altitude", "filed_planes", "filed_sats_per_plane",
                                    "filed_total", "observed_shell", "delta_inclination", "delta_altitude",
                                    "population", "shortfall", "flagged"], rows)
    return summary


def stage_structure(a: Analysis, out: Path) -> dict[str, Any]:
    hist_rows, comp_rows, pers_rows, walker_rows, class_rows = [], [], [], [], []
    summary: dict[str, Any] = {}
    for label in a.selected_labels():
        gaps_all = []
        by_date: dict[dt.date, dict[int, structure.SatClass]] = {}
        for d in a.dates:
            g, per_plane = a.classes(d, label)
            planes = a.planes(d, label)
            if planes is not None:
                gaps_all.extend(structure.shell_profiles(a.tables[d], planes).values())
            if g is None:
                continue
            classes = structure.merged_classes(per_plane)
            by_date[d] = classes
            comp = structure.composition(classes)
            comp_rows.append((d, label, g, len(classes), *[comp[c] for c in structure.SatClass]))
            try:
                w = structure.walker_from_shell(a.tables[d], planes, per_plane, g, a.th.walker_bin_deg)
                walker_rows.append((d, label, w.i, w.T, w.P, w.F, w.delta_phi))
            except ValueError:
                pass
        edges, counts = structure.spacing_histogram(gaps_all, a.th.spacing_bin_deg)
        hist_rows += [(label, e, c) for e, c in zip(edges, counts) if c]
        ordered = sorted(by_date)
        for d0, d1 in zip(ordered, ordered[1:]):
            if (d1 - d0).days == 1:
                pers_rows.append((d1, label, structure.persistence(by_date[d0], by_date[d1])))
        for n, f in structure.regular_lifetime_fraction(by_date).items():
            class_rows.append((label, n, f))
        if ordered:
            last = a.classes(ordered[-1], label)[1]
            write_csv(out / "classes" / f"{label.replace('/', '_')}_{ordered[-1].isoformat()}.csv",
                      ["norad_id", "class", "gap_prev", "gap_next"],
                      [(n, c.value, pc.gap_prev[n], pc.gap_next[n])
                       for pc in last.values() for n, c in sorted(pc.classes.items())])
            comp = structure.composition(by_date[ordered[-1]])
            summary[label] = {"regular_spacing": a.classes(ordered[-1], label)[0],
                              "regular_fraction": comp[structure.SatClass.REGULAR]}
    write_csv(out / "spacing_histogram.csv", ["shell", "bin_start_deg", "count"], hist_rows)
    write_csv(out / "composition.csv", ["date", "shell", "regular_spacing", "satellites",
                                        *[c.value.lower() for c in structure.SatClass]], comp_rows)
    write_csv(out / "persistence.csv", ["date", "shell", "persistence"], pers_rows)
    write_csv(out / "regular_lifetime.csv", ["shell", "norad_id", "regular_fraction"], class_rows)
    write_csv(out / "walker.csv", ["date", "shell", "inclination", "T", "P", "F", "delta_phi"], walker_rows)
    return summary


def stage_lifecycle(a: Analysis, out: Path) -> dict[str, Any]:
    histories = lifecycle.collect_histories([a.tables[d] for d in a.dates], {d: a.assignment(d) for d in a.dates})
    records, never = lifecycle.segment_all(histories, a.th.lifecycle_margin_km, a.end)
    write_csv(out / "phases.csv", ["norad_id", "shell", "first_seen", "t_enter", "t_exit", "last_seen",
                                   "ascent_days", "operational_days", "descent_days", "censored"],
              [(r.norad_id, r.operational_shell.label, r.first_seen, r.t_enter, r.t_exit, r.last_seen,
                r.ascent_days, r.operational_days, r.descent_days, r.censored) for r in records])
    write_csv(out / "never_operational.csv", ["norad_id"], [(n,) for n in never])

    cov = a.coverage()
    if a.satcat is not None:
        lives = lifecycle.lifetimes(a.satcat, cov, a.end) if a.dates else []
    else:
        lives = [lifecycle.Lifetime(n, f, l, (l - f).days, l >= a.end) for n, (f, l) in sorted(cov.items())]
    summary: dict[str, Any] = {"phase_records": len(records), "never_operational": len(never)}
    if lives:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            curve = lifecycle.kaplan_meier([x.duration for x in lives], [x.censored for x in lives])
            F = lifecycle.failure_curve(curve)
            summary["baseline_rate"] = lifecycle.baseline_rate(curve, a.th.baseline_window_start,
                                                               a.th.baseline_window_end)
        write_csv(out / "survival.csv", ["t", "n", "d", "S", "F"],
                  zip(curve.t.tolist(), curve.n.tolist(), curve.d.tolist(), curve.S.tolist(), F.tolist()))
    else:
        write_csv(out / "survival.csv", ["t", "n", "d", "S", "F"], [])
    write_csv(out / "lifetimes.csv", ["norad_id", "first", "last", "duration_days", "censored"],
              [(x.norad_id, x.first, x.last, x.duration, x.censored) for x in lives])
    if records:
        summary["median_phase_days"] = {
            "ascent": float(np.median([r.ascent_days for r in records])),
            "operational": float(np.median([r.operational_days for r in records])),
            "descent": float(np.median([r.descent_days for r in records])),
        }
    return summary


def stage_movement(a: Analysis, out: Path, labels: Sequence[str] | None = None,
                   sigma: float | None = None) -> dict[str, Any]:
    sigma = a.th.movement_sigma if sigma is None else sigma
    index = movement.ConjunctionIndex(a.conjunctions, a.th.collision_probability_threshold)
    cov = a.coverage()
    first_seen = {n: f for n, (f, _) in cov.items()}
    event_rows, daily_rows = [], []
    summary: dict[str, Any] = {}
    for label in labels or a.selected_labels():
        members = {d: a.members(d, label) for d in a.dates}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            flags, deltas = movement.detect_range([a.tables[d] for d in a.dates], members, sigma,
                                                  a.th.movement_min_common, a.th.movement_scale)
        events = movement.classify_all(movement.streaks(flags), index, first_seen,
                                       a.th.conjunction_window_days, a.th.initial_positioning_days)
        for e in events:
            event_rows.append((label, e.norad_id, e.start, e.end, e.length, e.type.value, e.cause.value, e.max_sigma))
        counts = movement.daily_counts(events)
        for d in [x.date1 for x in deltas]:
            c = counts.get(d, {})
            daily_rows.append((d, label, sum(c.get(t.value, 0) for t in movement.EventType),
                               *[c.get(t.value, 0) for t in movement.EventType],
                               *[c.get(k.value, 0) for k in movement.Cause]))
        causes = Counter(e.cause.value for e in events)
        summary[label] = {
            "events": len(events),
            "day_pairs": len(deltas),
            "causes": {k.value: causes.get(k.value, 0) for k in movement.Cause},
            "phasing_without_altitude": movement.phasing_altitude_coupling(events),
        }
    write_csv(out / "movement_events.csv",
              ["shell", "norad_id", "start", "end", "length", "type", "class", "max_sigma"], event_rows)
    write_csv(out / "movement_daily.csv",
              ["date", "shell", "total", *[t.value.lower() for t in movement.EventType],
               *[k.value.lower() for k in movement.Cause]], daily_rows)
    return summary


def stage_visibility(a: Analysis, out: Path, dates: Sequence[dt.date] | None = None) -> dict[str, Any]:
    if dates is None:
        dates = [_date(x) for x in a.cfg.visibility_dates] or ([a.end] if a.dates else [])
    lat = netsim.VisibilityGrid.latitudes()
    lon = netsim.VisibilityGrid.longitudes()
    summary = {}
    for d in dates:
        if d not in a.tables:
            raise InputError(f"no snapshot for visibility date {d}")
        t = a.tables[d]
        grid = netsim.visibility_grid(t.positions, t.instant, a.th.min_elevation_deg)
        rows = ((lat[i], lon[j], int(grid.counts[i, j])) for i in range(180) for j in range(360))
        write_csv(out / "visibility" / f"{d.isoformat()}.csv", ["lat", "lon", "visible"], rows)
        band = grid.counts[(np.abs(lat) >= 30) & (np.abs(lat) <= 60)]
        summary[d.isoformat()] = {"max": int(grid.counts.max()), "mean_30_60": float(band.mean())}
    return summary


def _pgrid(a: Analysis, d: dt.date, label: str) -> netsim.TopologyGraph | None:
    planes = a.planes(d, label)
    if planes is None or not planes.n_planes:
        return None
    return netsim.build_pgrid(a.tables[d].select(n for n, p in planes.labels.items() if p is not None), planes)


def stage_topology(a: Analysis, out: Path, topologies: Sequence[str] = ("grid", "pgrid"),
                   d: dt.date | None = None) -> dict[str, Any]:
    d = _date(a.cfg.topology_date) if d is None and a.cfg.topology_date else (d or a.end)
    rows, route_rows = [], []
    summary: dict[str, Any] = {}
    if "grid" in topologies:
        g = netsim.build_grid(a.cfg.grid_planes, a.cfg.grid_sats_per_plane, a.cfg.grid_phasing)
        m = netsim.route_metrics(g)
        rows.append(("ideal", "grid", None, g.n_nodes, len(g.edges), m.n_components, m.avg_delay_ms, m.avg_hops))
        summary["grid"] = {"avg_delay_ms": m.avg_delay_ms, "avg_hops": m.avg_hops}
    cities = netsim.load_cities()
    if "pgrid" in topologies and d is not None:
        if d not in a.tables:
            raise InputError(f"no snapshot for topology date {d}")
        for label in a.selected_labels():
            graph = _pgrid(a, d, label)
            if graph is None:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                m = netsim.route_metrics(graph)
            rows.append((label, "pgrid", d, graph.n_nodes, len(graph.edges), m.n_components, m.avg_delay_ms,
                         m.avg_hops))
            summary[f"pgrid {label}"] = {"avg_delay_ms": m.avg_delay_ms, "avg_hops": m.avg_hops}
            for src, dst in a.cfg.city_pairs:
                if src not in cities or dst not in cities:
                    raise InputError(f"unknown city in pair ({src}, {dst}); see the bundled gazetteer")
                try:
                    r = netsim.ground_route(graph, cities[src], cities[dst], a.th.min_elevation_deg)
                    route_rows.append((label, d, src, dst, r.delay_ms, r.satellites, None))
                except netsim.NoRouteError as exc:
                    route_rows.append((label, d, src, dst, None, None, str(exc)))
    write_csv(out / "topology.csv", ["shell", "topology", "date", "nodes", "edges", "components",
                                     "avg_delay_ms", "avg_hops"], rows)
    write_csv(out / "routes.csv", ["shell", "date", "src", "dst", "delay_ms", "satellites", "error"], route_rows)
    return summary


def stage_churn(a: Analysis, out: Path, node_modes: Sequence[str] = ("all", "regular")) -> dict[str, Any]:
    rows = []
    summary: dict[str, Any] = {}
    for label in a.selected_labels():
        planes = {d: a.planes(d, label) for d in a.dates}
        planes = {d: p for d, p in planes.items() if p is not None}
        for mode in node_modes:
            node_filter = None
            if mode == "regular":
                node_filter = {}
                for d in planes:
                    g, per_plane = a.classes(d, label)
                    classes = structure.merged_classes(per_plane)
                    node_filter[d] = [n for n, c in classes.items() if c is structure.SatClass.REGULAR]
            report = netsim.link_churn([a.tables[d] for d in planes], planes, node_filter)
            for day in report.days:
                rows.append((label, mode, day.date0, day.date1, day.links, day.failed, day.missing_satellite,
                             day.repositioned, day.rate))
            summary[f"{label} {mode}"] = {"mean_failures": report.mean_failures(), "mean_rate": report.mean_rate(),
                                          **report.attribution()}
    write_csv(out / "churn.csv", ["shell", "nodes", "date0", "date1", "links", "failed", "missing_satellite",
                                  "repositioned", "rate"], rows)
    return summary


def run_pipeline(cfg: RunConfig | str | Path) -> Path:
    """Run every analysis over the configured store and write the report bundle to ``cfg.out``."""
    if not isinstance(cfg, RunConfig):
        cfg = load_config(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    a = Analysis(cfg)
    summary: dict[str, Any] = {"dates": len(a.dates), "warnings": []}
    if not a.dates:
        msg = "no snapshots in the requested date range; bundle is empty"
        log.warning(msg)
        summary["warnings"].append(msg)
    summary["shells"] = stage_shells(a, out)
    summary["structure"] = stage_structure(a, out)
    summary["lifecycle"] = stage_lifecycle(a, out)
    summary["movement"] = stage_movement(a, out)
    summary["visibility"] = stage_visibility(a, out)
    summary["topology"] = stage_topology(a, out)
    summary["churn"] = stage_churn(a, out)
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n")
    return out


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return None if np.isnan(value) else round(float(value), 9)
    if isinstance(value, np.integer):
        return int(value)
    return value


# ---------------------------------------------------------------- ingest

def run_ingest(cfg: RunConfig, tle_paths: Sequence[Path], force: bool = False) -> dict[str, Any]:
    if not tle_paths:
        raise InputError("no TLE files given (--tle or `tle:` in the config)")
    missing = [str(p) for p in tle_paths if not Path(p).exists()]
    if missing:
        raise InputError(f"TLE file(s) not found: {', '.join(missing)}")
    records, diagnostics = [], []
    for path in tle_paths:
        with open(path, encoding="utf-8", errors="replace") as fh:
            result = ingest.parse_tle(fh)
        records += [r for r in result.records if r.in_leo_range]
        diagnostics += [(str(path), dg.line, dg.reason, dg.detail, dg.rejected) for dg in result.diagnostics]
    if not records:
        raise InputError("no valid LEO element sets in the input")
    lo = _date(cfg.date_from) or min(r.epoch for r in records).date()
    hi = _date(cfg.date_to) or max(r.epoch for r in records).date()
    existing = set(store.available_dates(cfg.store)) if Path(cfg.store).is_dir() else set()
    written = 0
    report = ingest.BuildReport()
    for d in store.date_range(lo, hi):
        if d in existing and not force:
            continue  # resume: keep dates already in the store
        table = ingest.build_daily_states(records, d, d, cfg.thresholds.fallback_window_h, report=report)[0]
        store.write_table(table, cfg.store)
        written += 1
    write_csv(Path(cfg.out) / "ingest_diagnostics.csv", ["file", "line", "reason", "detail", "rejected"], diagnostics)
    return {"records": len(records), "dates_written": written, "diagnostics": len(diagnostics),
            "propagation_failures": report.propagation_failures}


# ---------------------------------------------------------------- argument parsing

def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    updates: dict[str, Any] = {}
    if getattr(args, "out", None):
        updates["out"] = Path(args.out)
    if getattr(args, "store", None):
        updates["store"] = Path(args.store)
    if getattr(args, "date_from", None):
        updates["date_from"] = args.date_from
    if getattr(args, "date_to", None):
        updates["date_to"] = args.date_to
    if getattr(args, "shell", None):
        updates["shells"] = [args.shell]
    if getattr(args, "satcat", None):
        updates["satcat"] = Path(args.satcat)
    if getattr(args, "conjunctions", None):
        updates["conjunctions"] = Path(args.conjunctions)
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "set", None):
        values = {**dataclasses.asdict(cfg.thresholds)}
        for item in args.set:
            key, _, value = item.partition("=")
            values[key] = value
        updates["thresholds"] = thresholds_from_mapping(values)
    return dataclasses.replace(cfg, **updates)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--store", help="snapshot store directory (states/)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a threshold")
    common.add_argument("-v", "--verbose", action="store_true")

    span = argparse.ArgumentParser(add_help=False)
    span.add_argument("--from", dest="date_from", help="first date (YYYY-MM-DD)")
    span.add_argument("--to", dest="date_to", help="last date (YYYY-MM-DD)")

    p = argparse.ArgumentParser(prog="leoforensics", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common, span], help="TLE files -> daily snapshot store")
    s.add_argument("--tle", nargs="+", default=[], help="TLE files")
    s.add_argument("--force", action="store_true", help="rebuild dates already in the store")

    s = sub.add_parser("synth", parents=[common], help="synthetic constellations")
    ss = s.add_subparsers(dest="action", required=True)
    g = ss.add_parser("generate", parents=[common])
    g.add_argument("--tles", action="store_true", help="also write element sets per day")

    s = sub.add_parser("shells", parents=[common], help="shell and plane detection")
    ss = s.add_subparsers(dest="action", required=True)
    ss.add_parser("detect", parents=[common, span])

    s = sub.add_parser("structure", parents=[common], help="intra-plane structure")
    ss = s.add_subparsers(dest="action", required=True)
    c = ss.add_parser("classify", parents=[common, span])
    c.add_argument("--shell", required=True)
    c.add_argument("--date")

    s = sub.add_parser("lifecycle", parents=[common], help="lifecycle phases and survival")
    ss = s.add_subparsers(dest="action", required=True)
    for name in ("survival", "phases"):
        x = ss.add_parser(name, parents=[common, span])
        x.add_argument("--satcat")

    s = sub.add_parser("movement", parents=[common], help="maneuver detection")
    ss = s.add_subparsers(dest="action", required=True)
    m = ss.add_parser("detect", parents=[common, span])
    m.add_argument("--shell", required=True)
    m.add_argument("--sigma", type=float)
    m.add_argument("--conjunctions")

    s = sub.add_parser("netsim", parents=[common], help="topologies, routing, churn, visibility")
    ss = s.add_subparsers(dest="action", required=True)
    x = ss.add_parser("metrics", parents=[common])
    x.add_argument("--topology", choices=["grid", "pgrid"], default="pgrid")
    x.add_argument("--date")
    x.add_argument("--shell")
    x = ss.add_parser("churn", parents=[common, span])
    x.add_argument("--nodes", choices=["all", "regular"], default="all")
    x.add_argument("--shell")
    x = ss.add_parser("visibility", parents=[common])
    x.add_argument("--date", required=True)

    sub.add_parser("report", parents=[common, span], help="run the full pipeline")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        result = _dispatch(args)
    except (InputError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if result is not None:
        print(json.dumps(_jsonable(result), indent=1, sort_keys=True, default=str))
    return 0


def _dispatch(args) -> Any:
    cmd = args.command
    if cmd == "synth":
        if not args.config:
            raise InputError("synth generate needs --config synth.yaml")
        scfg = synth.load_synth_config(args.config)
        if args.seed is not None:
            scfg = dataclasses.replace(scfg, seed=args.seed)
        out = Path(args.out or "synth")
        result = synth.generate(scfg)
        synth.write(result, out, tles=args.tles)
        return {"out": str(out), "days": len(result.tables), "satellites": len(result.truth["satellites"])}

    cfg = _base_config(args)
    out = Path(cfg.out)
    if cmd == "ingest":
        tles = [Path(p) for p in args.tle] or list(cfg.tle)
        return run_ingest(cfg, tles, args.force)
    if cmd == "report":
        path = run_pipeline(cfg)
        return json.loads((path / "summary.json").read_text())

    a = Analysis(cfg)
    if not a.dates:
        log.warning("no snapshots in the requested date range")
    if cmd == "shells":
        return stage_shells(a, out)
    if cmd == "structure":
        d = _date(args.date) or a.end
        if d is None or d not in a.tables:
            raise InputError(f"no snapshot for {args.date}")
        g, per_plane = a.classes(d, args.shell)
        if g is None:
            raise InputError(f"no regular structure for shell {args.shell} on {d}")
        write_csv(out / "classes.csv", ["norad_id", "class", "gap_prev", "gap_next"],
                  [(n, c.value, pc.gap_prev[n], pc.gap_next[n])
                   for pc in per_plane.values() for n, c in sorted(pc.classes.items())])
        profiles = structure.shell_profiles(a.tables[d], a.planes(d, args.shell))
        edges, counts = structure.spacing_histogram(list(profiles.values()), cfg.thresholds.spacing_bin_deg)
        write_csv(out / "spacing_histogram.csv", ["bin_start_deg", "count"], [(e, c) for e, c in zip(edges, counts) if c])
        comp = structure.composition(structure.merged_classes(per_plane))
        return {"date": d, "regular_spacing": g, **{k.value: v for k, v in comp.items()}}
    if cmd == "lifecycle":
        return stage_lifecycle(a, out)
    if cmd == "movement":
        return stage_movement(a, out, [args.shell], args.sigma)
    if cmd == "netsim":
        if args.action == "visibility":
            return stage_visibility(a, out, [_date(args.date)])
        if args.shell:
            a.cfg.shells = [args.shell]
        if args.action == "metrics":
            return stage_topology(a, out, [args.topology], _date(args.date))
        return stage_churn(a, out, [args.nodes])
    raise InputError(f"unknown command {cmd}")


if __name__ == "__main__":
    sys.exit(main())
