"""Shell and orbital-plane identification, population tracking and filing comparison."""

from __future__ import annotations

import csv
import datetime as dt
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml
from sklearn.cluster import DBSCAN

from .ingest import SatCatEntry
from .store import DailyStateTable


@dataclass(frozen=True, order=True)
class ShellId:
    inclination_center: float
    altitude_center: float
    label: str

    @classmethod
    def from_centers(cls, inclination: float, altitude: float) -> "ShellId":
        inc = round(float(inclination), 1)
        alt = int(round(float(altitude)))
        return cls(inc, float(alt), f"{inc:.1f}/{alt}")


@dataclass(frozen=True)
class ShellAssignment:
    date: dt.date
    shells: tuple[ShellId, ...]
    labels: Mapping[int, ShellId | None]

    def members(self, shell: ShellId) -> list[int]:
        return sorted(n for n, s in self.labels.items() if s == shell)

    def counts(self) -> dict[ShellId | None, int]:
        return dict(Counter(self.labels.values()))

    def shell_by_label(self, label: str) -> ShellId | None:
        return next((s for s in self.shells if s.label == label), None)


@dataclass(frozen=True)
class PlaneAssignment:
    date: dt.date
    shell: ShellId | None
    labels: Mapping[int, int | None]
    plane_raan_centers: tuple[float, ...]

    @property
    def n_planes(self) -> int:
        return len(self.plane_raan_centers)

    def members(self, plane: int) -> list[int]:
        return sorted(n for n, p in self.labels.items() if p == plane)


@dataclass(frozen=True)
class FiledShellSpec:
    inclination: float
    altitude: float
    planes: int
    sats_per_plane: int

    @property
    def total(self) -> int:
        return self.planes * self.sats_per_plane


def _dbscan_weighted(points: np.ndarray, eps: float, min_samples: int, metric: str) -> np.ndarray:
    """DBSCAN over unique points weighted by multiplicity; labels for every input row."""
    if len(points) == 0:
        return np.empty(0, dtype=int)
    unique, inverse, counts = np.unique(points, axis=0, return_inverse=True, return_counts=True)
    model = DBSCAN(eps=eps, min_samples=min_samples, metric=metric)
    labels = model.fit_predict(unique, sample_weight=counts)
    return labels[inverse.reshape(-1)]


def _shell_altitudes(states: DailyStateTable, altitude: str) -> np.ndarray:
    if altitude == "mean":
        return states.alt_km
    if altitude == "apogee":
        return states.apogee_km
    raise ValueError(f"unknown altitude definition {altitude!r}")


def detect_shells(
    states: DailyStateTable,
    min_samples: int = 25,
    incl_threshold: float = 0.1,
    alt_threshold: float = 10.0,
    altitude: str = "mean",
) -> ShellAssignment:
    """Cluster one day's satellites into (inclination, altitude) shells.

    Points are scaled per axis by the thresholds and clustered with DBSCAN in
    the Chebyshev metric at radius 1, so two satellites are neighbours when
    they are within both thresholds. Non-clustered satellites get ``None``.
    """
    norad = states.norad_id
    _, first = np.unique(norad, return_index=True)
    norad = norad[first]
    points = np.column_stack([
        states.incl_deg[first] / incl_threshold,
        _shell_altitudes(states, altitude)[first] / alt_threshold,
    ])
    if len(norad) < min_samples:
        return ShellAssignment(states.date, (), {int(n): None for n in norad})

    labels = _dbscan_weighted(points, 1.0, min_samples, "chebyshev")
    shells: dict[int, ShellId] = {}
    for k in sorted(set(labels) - {-1}):
        mask = labels == k
        shells[k] = ShellId.from_centers(
            np.median(points[mask, 0]) * incl_threshold, np.median(points[mask, 1]) * alt_threshold
        )
    mapping = {int(n): shells.get(int(lab)) for n, lab in zip(norad, labels)}
    ordered = tuple(sorted(set(shells.values())))
    return ShellAssignment(states.date, ordered, mapping)


def circular_distance(a, b):
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), 360.0))
    return np.minimum(d, 360.0 - d)


def circular_mean_deg(values) -> float:
    rad = np.radians(values)
    return float(np.mod(np.degrees(np.arctan2(np.sin(rad).mean(), np.cos(rad).mean())), 360.0))


def _split_wide(members: np.ndarray, raan: np.ndarray, max_span: float) -> list[np.ndarray]:
    """Split a cluster at its widest internal gap until every piece spans <= max_span."""
    if len(members) < 2:
        return [members]
    v = np.mod(raan[members], 360.0)
    order = np.argsort(v, kind="stable")
    ordered, v = members[order], v[order]
    gaps = np.diff(np.append(v, v[0] + 360.0))
    shift = (int(np.argmax(gaps)) + 1) % len(v)
    ordered, v = np.roll(ordered, -shift), np.roll(v, -shift)
    pos = np.mod(v - v[0], 360.0)
    if pos[-1] <= max_span:
        return [ordered]
    cut = int(np.argmax(np.diff(pos))) + 1
    return _split_wide(ordered[:cut], raan, max_span) + _split_wide(ordered[cut:], raan, max_span)


def detect_planes(
    shell_states: DailyStateTable,
    raan_radius: float = 1.0,
    min_plane_size: int = 3,
    shell: ShellId | None = None,
) -> PlaneAssignment:
    """Cluster one shell's satellites into orbital planes by RAAN.

    DBSCAN with the circular distance min(|d|, 360 - |d|): RAANs are mapped to
    the unit circle, where chord length is monotone in that distance. Clusters
    smaller than ``min_plane_size`` are left as transit (``None``). Planes are
    indexed by ascending RAAN center.
    """
    norad = shell_states.norad_id
    raan = np.mod(shell_states.raan_deg, 360.0)
    if len(norad) == 0:
        return PlaneAssignment(shell_states.date, shell, {}, ())
    order = np.argsort(norad, kind="stable")
    norad, raan = norad[order], raan[order]
    rad = np.radians(raan)
    points = np.column_stack([np.cos(rad), np.sin(rad)])
    eps = 2.0 * np.sin(np.radians(raan_radius) / 2.0) * (1.0 + 1e-12)
    labels = _dbscan_weighted(points, eps, min_plane_size, "euclidean")

    clusters = []
    for k in sorted(set(labels) - {-1}):
        members = np.flatnonzero(labels == k)
        for piece in _split_wide(members, raan, 2.0 * raan_radius):
            if len(piece) >= min_plane_size:
                clusters.append((circular_mean_deg(raan[piece]), piece))
    clusters.sort(key=lambda c: c[0])
    mapping: dict[int, int | None] = {int(n): None for n in norad}
    for idx, (_, piece) in enumerate(clusters):
        for i in piece:
            mapping[int(norad[i])] = idx
    centers = tuple(c for c, _ in clusters)
    return PlaneAssignment(shell_states.date, shell, mapping, centers)


def parse_label(label: str) -> tuple[float, float]:
    """(inclination, altitude) from a shell label such as "53.2/484"."""
    try:
        inc, alt = label.split("/")
        return float(inc), float(alt)
    except ValueError:
        raise ValueError(f"shell label {label!r} is not of the form INCL/ALT") from None


def match_shell(assignment: ShellAssignment, label: str, incl_threshold: float = 0.1,
                alt_threshold: float = 10.0) -> ShellId | None:
    """The day's shell nearest to ``label`` within the clustering thresholds, if any."""
    inc, alt = parse_label(label)
    best, best_d = None, None
    for shell in assignment.shells:
        d = max(abs(shell.inclination_center - inc) / incl_threshold,
                abs(shell.altitude_center - alt) / alt_threshold)
        if d <= 1.0 and (best_d is None or (d, shell.label) < (best_d, best.label)):
            best, best_d = shell, d
    return best


def planes_by_shell(states: DailyStateTable, assignment: ShellAssignment, raan_radius: float = 1.0,
                    min_plane_size: int = 3) -> dict[ShellId, PlaneAssignment]:
    out = {}
    for shell in assignment.shells:
        sub = states.select(assignment.members(shell))
        out[shell] = detect_planes(sub, raan_radius, min_plane_size, shell)
    return out


# ---------------------------------------------------------------- time series

@dataclass
class ShellTrack:
    label: str
    inclination: float
    altitude: float
    counts: dict[dt.date, int] = field(default_factory=dict)
    labels: dict[dt.date, str] = field(default_factory=dict)


@dataclass
class ShellTimeseries:
    dates: list[dt.date]
    tracks: list[ShellTrack]
    active: list[int]
    cumulative_launched: list[int]
    cumulative_decayed: list[int]

    def track_for(self, date: dt.date, label: str) -> ShellTrack | None:
        return next((t for t in self.tracks if t.labels.get(date) == label), None)


def shell_timeseries(
    assignments: Sequence[ShellAssignment],
    satcat: Iterable[SatCatEntry] | None = None,
    incl_threshold: float = 0.1,
    alt_threshold: float = 10.0,
) -> ShellTimeseries:
    """Per-shell population curves plus constellation-level totals.

    Shells are tracked across days by matching each day's centers to the
    tracks' latest centers within (incl_threshold, alt_threshold); unmatched
    shells open new tracks. Totals come from the SatCat when given (active,
    cumulative launched, cumulative decayed), else from snapshot presence.
    """
    assignments = sorted(assignments, key=lambda a: a.date)
    tracks: list[ShellTrack] = []
    for a in assignments:
        counts = a.counts()
        taken: set[int] = set()
        for shell in sorted(a.shells, key=lambda s: -counts.get(s, 0)):
            best, best_d = None, None
            for k, tr in enumerate(tracks):
                if k in taken:
                    continue
                di = abs(tr.inclination - shell.inclination_center) / incl_threshold
                da = abs(tr.altitude - shell.altitude_center) / alt_threshold
                d = max(di, da)
                if d <= 1.0 and (best_d is None or d < best_d):
                    best, best_d = k, d
            if best is None:
                tracks.append(ShellTrack(shell.label, shell.inclination_center, shell.altitude_center))
                best = len(tracks) - 1
            taken.add(best)
            tr = tracks[best]
            tr.inclination, tr.altitude = shell.inclination_center, shell.altitude_center
            tr.counts[a.date] = counts.get(shell, 0)
            tr.labels[a.date] = shell.label

    dates = [a.date for a in assignments]
    for tr in tracks:
        for d in dates:
            tr.counts.setdefault(d, 0)

    if satcat is not None:
        cat = list(satcat)
        launches = np.sort(np.array([e.launch_date.toordinal() for e in cat], dtype=np.int64))
        decays = np.sort(np.array([e.decay_date.toordinal() for e in cat if e.decay_date], dtype=np.int64))
        ords = np.array([d.toordinal() for d in dates], dtype=np.int64)
        launched = np.searchsorted(launches, ords, side="right")
        decayed = np.searchsorted(decays, ords, side="right")
        active = (launched - decayed).tolist()
        launched, decayed = launched.tolist(), decayed.tolist()
    else:
        active = [len(a.labels) for a in assignments]
        launched, decayed = [], []
        seen: set[int] = set()
        for a in assignments:
            seen |= set(a.labels)
            launched.append(len(seen))
            decayed.append(len(seen) - len(a.labels))
    return ShellTimeseries(dates, tracks, active, launched, decayed)


# ---------------------------------------------------------------- generations

def load_generation_map(path: str | Path | None = None) -> list[tuple[str, str]]:
    """Ordered (regex, generation) pairs; the first pattern found in a name wins."""
    if path is None:
        text = resources.files("leoforensics").joinpath("data/generations.yaml").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    raw = yaml.safe_load(text) or {}
    return [(str(item["pattern"]), str(item["generation"])) for item in raw.get("generations", [])]


def generation_of(name: str, mapping: Sequence[tuple[str, str]]) -> str:
    for pattern, generation in mapping:
        if re.search(pattern, name, flags=re.IGNORECASE):
            return generation
    return "unknown"


def generation_breakdown(
    assignment: ShellAssignment,
    satcat: Iterable[SatCatEntry],
    mapping: Sequence[tuple[str, str]] | None = None,
) -> dict[ShellId, Counter]:
    mapping = load_generation_map() if mapping is None else mapping
    names = {e.norad_id: e.object_name for e in satcat}
    out: dict[ShellId, Counter] = {s: Counter() for s in assignment.shells}
    for norad, shell in assignment.labels.items():
        if shell is None:
            continue
        name = names.get(norad)
        out[shell][generation_of(name, mapping) if name else "unknown"] += 1
    return out


# ---------------------------------------------------------------- filings

def load_filed_shells(path: str | Path | None = None) -> list[FiledShellSpec]:
    if path is None:
        text = resources.files("leoforensics").joinpath("data/filed_shells.csv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    return [
        FiledShellSpec(float(r["inclination"]), float(r["altitude"]), int(r["planes"]), int(r["sats_per_plane"]))
        for r in rows
    ]


@dataclass(frozen=True)
class FilingDeviation:
    spec: FiledShellSpec
    observed: ShellId | None
    delta_inclination: float | None
    delta_altitude: float | None
    population: int | None
    shortfall: int | None
    flagged: bool


@dataclass(frozen=True)
class FilingReport:
    deviations: list[FilingDeviation]
    unmatched_observed: list[ShellId]


def compare_filed(
    observed: Mapping[ShellId, int],
    specs: Sequence[FiledShellSpec],
    incl_tolerance: float = 0.15,
    alt_window: float = 100.0,
    alt_threshold: float = 10.0,
) -> FilingReport:
    """Match each filed shell to the nearest observed shell of the same inclination.

    ``observed`` maps shells to their populations. A spec matches the observed
    shell with |d_incl| <= incl_tolerance and the smallest |d_alt| within
    ``alt_window``. A match is flagged when the altitude differs by more than
    ``alt_threshold`` or the population falls short of the filed total.
    """
    deviations = []
    matched: set[ShellId] = set()
    for spec in specs:
        candidates = [
            s for s in observed
            if abs(s.inclination_center - spec.inclination) <= incl_tolerance
            and abs(s.altitude_center - spec.altitude) <= alt_window
        ]
        if not candidates:
            deviations.append(FilingDeviation(spec, None, None, None, None, None, True))
            continue
        best = min(candidates, key=lambda s: (abs(s.altitude_center - spec.altitude),
                                              abs(s.inclination_center - spec.inclination), s.label))
        matched.add(best)
        d_inc = round(best.inclination_center - spec.inclination, 6)
        d_alt = round(best.altitude_center - spec.altitude, 6)
        population = int(observed[best])
        shortfall = spec.total - population
        flagged = abs(d_alt) > alt_threshold or shortfall > 0
        deviations.append(FilingDeviation(spec, best, d_inc, d_alt, population, shortfall, flagged))
    unmatched = sorted(s for s in observed if s not in matched)
    return FilingReport(deviations, unmatched)
