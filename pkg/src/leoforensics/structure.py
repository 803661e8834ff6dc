"""Intra-plane phase structure: spacing, regular/twin-triad/uneven classes, Walker parameters."""

from __future__ import annotations

import datetime as dt
import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .shells import PlaneAssignment, ShellId, circular_mean_deg
from .store import DailyStateTable


class SatClass(str, enum.Enum):
    REGULAR = "REGULAR"
    TWIN_TRIAD = "TWIN_TRIAD"
    UNEVEN = "UNEVEN"


class NoRegularStructure(ValueError):
    pass


@dataclass(frozen=True)
class SpacingProfile:
    norad_ids: tuple[int, ...]
    phases: np.ndarray
    gaps: np.ndarray
    date: dt.date | None = None
    shell: ShellId | None = None
    plane: int | None = None

    def __len__(self) -> int:
        return len(self.norad_ids)


@dataclass(frozen=True)
class RegularGridModel:
    shell: ShellId | None
    date: dt.date | None
    g: float
    plane_offsets: dict[int, float] = field(default_factory=dict)

    @property
    def slots_per_plane(self) -> int:
        return int(round(360.0 / self.g))


@dataclass(frozen=True)
class PlaneClassification:
    classes: dict[int, SatClass]
    slot_holders: frozenset[int]
    gap_prev: dict[int, float]
    gap_next: dict[int, float]

    def counts(self) -> Counter:
        return Counter(self.classes.values())


@dataclass(frozen=True)
class WalkerEstimate:
    i: float
    T: int
    P: int
    F: int
    delta_phi: float
    pair_F: tuple[int, ...] = ()


def spacing_profile(norad_ids: Sequence[int], phases: Sequence[float], **meta) -> SpacingProfile:
    """Order a plane's satellites by phase; gap k runs from satellite k to k+1 (last one wraps)."""
    u = np.mod(np.asarray(phases, dtype=float), 360.0)
    ids = np.asarray(norad_ids, dtype=np.int64)
    if len(u) == 0:
        raise ValueError("empty plane")
    order = np.lexsort((ids, u))
    u, ids = u[order], ids[order]
    gaps = np.diff(np.append(u, u[0] + 360.0))
    return SpacingProfile(tuple(int(i) for i in ids), u, gaps, **meta)


def shell_profiles(states: DailyStateTable, planes: PlaneAssignment) -> dict[int, SpacingProfile]:
    idx = states.index_of()
    out = {}
    for p in range(planes.n_planes):
        members = [n for n in planes.members(p) if n in idx]
        if members:
            rows = [idx[n] for n in members]
            out[p] = spacing_profile(members, states.u_deg[rows], date=states.date, shell=planes.shell, plane=p)
    return out


def spacing_histogram(profiles: Sequence[SpacingProfile], bin_width: float = 0.5):
    """Counts of all gaps in fixed-width bins over [0, 360]; returns (left edges, counts)."""
    gaps = np.concatenate([p.gaps for p in profiles]) if profiles else np.empty(0)
    edges = np.arange(0.0, 360.0 + bin_width, bin_width)
    counts, _ = np.histogram(gaps, bins=edges)
    return edges[:-1], counts


def estimate_regular_spacing(
    profiles: Sequence[SpacingProfile],
    twin_threshold: float = 5.0,
    bin_width: float = 0.5,
    refine: float = 2.0,
) -> float:
    """Characteristic regular spacing g of a shell.

    Gaps from planes with at least three satellites, excluding gaps below
    ``twin_threshold``, are binned at ``bin_width``; the fullest bin (lowest on
    ties) gives a coarse value, refined to the median of gaps within
    ``refine`` degrees of it.
    """
    usable = [p.gaps for p in profiles if len(p) >= 3]
    gaps = np.concatenate(usable) if usable else np.empty(0)
    gaps = gaps[gaps >= twin_threshold]
    if len(gaps) == 0:
        raise NoRegularStructure("no regular structure")
    bins = np.floor(gaps / bin_width).astype(np.int64)
    counts = np.bincount(bins)
    coarse = (int(np.argmax(counts)) + 0.5) * bin_width
    near = gaps[np.abs(gaps - coarse) <= refine]
    return float(np.median(near))


def _grid_deviation(gap: float, g: float) -> float:
    k = max(1, int(round(gap / g)))
    return abs(gap - k * g)


def classify(
    profile: SpacingProfile,
    g: float,
    twin_threshold: float = 5.0,
    tol: float = 2.0,
) -> PlaneClassification:
    """Label each satellite of one plane REGULAR, TWIN_TRIAD or UNEVEN.

    1. Maximal runs of 2-3 consecutive satellites whose internal gaps are
       below min(twin_threshold + tol, g / 2) form twin/triad clusters.
    2. Each cluster is represented by the member that best fits the grid
       spacing to its nearest non-cluster neighbours.
    3. Non-cluster satellites are REGULAR when both gaps to adjacent nodes
       (satellites or cluster representatives) lie within ``tol`` of a
       positive multiple of ``g``; otherwise UNEVEN.

    A cluster whose representative passes the same test keeps class
    TWIN_TRIAD but its representative is reported as a slot holder.
    """
    ids = profile.norad_ids
    u = profile.phases
    gaps = profile.gaps
    n = len(ids)
    bound = min(twin_threshold + tol, g / 2.0)
    close = gaps < bound

    # runs along the circle joined by close gaps
    runs: list[list[int]] = []
    if close.all():
        runs = [list(range(n))]
    else:
        start = (int(np.flatnonzero(~close)[0]) + 1) % n
        current = [start]
        for step in range(1, n):
            k = (start + step) % n
            if close[(k - 1) % n]:
                current.append(k)
            else:
                runs.append(current)
                current = [k]
        runs.append(current)
    clusters = [m for m in runs if 2 <= len(m) <= 3]
    in_cluster = np.zeros(n, dtype=bool)
    for m in clusters:
        in_cluster[m] = True
    singles = np.flatnonzero(~in_cluster)

    def ok(gap: float) -> bool:
        return _grid_deviation(gap, g) <= tol

    reps: dict[int, int] = {}
    for cid, members in enumerate(clusters):
        if len(singles) == 0:
            reps[cid] = min(members, key=lambda k: (abs(u[k] - circular_mean_deg(u[members])), ids[k]))
            continue
        first, last = members[0], members[-1]
        prev_single = min(singles, key=lambda s: (u[first] - u[s]) % 360.0)
        next_single = min(singles, key=lambda s: (u[s] - u[last]) % 360.0)

        def misfit(k: int) -> float:
            back = (u[k] - u[prev_single]) % 360.0 or 360.0
            fwd = (u[next_single] - u[k]) % 360.0 or 360.0
            return _grid_deviation(back, g) + _grid_deviation(fwd, g)

        reps[cid] = min(members, key=lambda k: (misfit(k), ids[k]))

    nodes = sorted(set(singles.tolist()) | set(reps.values()), key=lambda k: (u[k], ids[k]))
    node_ok: dict[int, bool] = {}
    m = len(nodes)
    for j, k in enumerate(nodes):
        if m == 1:
            back = fwd = 360.0
        else:
            back = (u[k] - u[nodes[j - 1]]) % 360.0
            fwd = (u[nodes[(j + 1) % m]] - u[k]) % 360.0
        node_ok[k] = ok(back) and ok(fwd)

    classes: dict[int, SatClass] = {}
    holders = set()
    for k in singles:
        regular = node_ok[int(k)]
        classes[ids[k]] = SatClass.REGULAR if regular else SatClass.UNEVEN
        if regular:
            holders.add(ids[k])
    for cid, members in enumerate(clusters):
        for k in members:
            classes[ids[k]] = SatClass.TWIN_TRIAD
        if node_ok[reps[cid]]:
            holders.add(ids[reps[cid]])

    gap_prev = {ids[k]: float(gaps[(k - 1) % n]) for k in range(n)}
    gap_next = {ids[k]: float(gaps[k]) for k in range(n)}
    return PlaneClassification(classes, frozenset(holders), gap_prev, gap_next)


def classify_shell(
    states: DailyStateTable,
    planes: PlaneAssignment,
    g: float,
    twin_threshold: float = 5.0,
    tol: float = 2.0,
) -> dict[int, PlaneClassification]:
    return {p: classify(prof, g, twin_threshold, tol) for p, prof in shell_profiles(states, planes).items()}


def merged_classes(per_plane: Mapping[int, PlaneClassification]) -> dict[int, SatClass]:
    out: dict[int, SatClass] = {}
    for pc in per_plane.values():
        out.update(pc.classes)
    return out


def composition(classes: Mapping[int, SatClass]) -> dict[SatClass, float]:
    total = len(classes)
    counts = Counter(classes.values())
    return {c: (counts.get(c, 0) / total if total else 0.0) for c in SatClass}


def composition_timeseries(
    classes_by_date: Mapping[dt.date, Mapping[int, SatClass]],
) -> list[tuple[dt.date, dict[SatClass, float]]]:
    return [(d, composition(classes_by_date[d])) for d in sorted(classes_by_date)]


def persistence(day: Mapping[int, SatClass], next_day: Mapping[int, SatClass]) -> float | None:
    """Share of satellites regular on ``day`` (and present on both days) still regular next day."""
    base = [n for n, c in day.items() if c is SatClass.REGULAR and n in next_day]
    if not base:
        return None
    return sum(next_day[n] is SatClass.REGULAR for n in base) / len(base)


def regular_lifetime_fraction(classes_by_date: Mapping[dt.date, Mapping[int, SatClass]]) -> dict[int, float]:
    observed: Counter = Counter()
    regular: Counter = Counter()
    for classes in classes_by_date.values():
        for n, c in classes.items():
            observed[n] += 1
            regular[n] += c is SatClass.REGULAR
    return {n: regular[n] / observed[n] for n in sorted(observed)}


def _circular_mode(values: np.ndarray, period: float, bin_width: float, refine: float | None = None) -> float:
    """Fullest bin of values on a circle of ``period``, refined by the median within ``refine``."""
    refine = 4.0 * bin_width if refine is None else refine
    nbins = max(1, int(np.ceil(period / bin_width - 1e-9)))
    bins = np.floor(np.mod(values, period) / bin_width).astype(np.int64) % nbins
    counts = np.bincount(bins, minlength=nbins)
    center = (int(np.argmax(counts)) + 0.5) * bin_width
    dev = np.mod(values - center + period / 2.0, period) - period / 2.0
    near = dev[np.abs(dev) <= refine]
    return float(np.mod(center + np.median(near), period)) if len(near) else center % period


def estimate_walker(
    plane_phases: Sequence[Sequence[float]],
    g: float,
    inclination: float,
    bin_width: float = 0.25,
) -> WalkerEstimate:
    """Effective Walker-Delta i:T/P/F from the slot-holding satellites of each plane.

    ``plane_phases`` lists, in ascending-RAAN order, the phases of the regular
    (slot-holding) satellites of each populated plane. For every adjacent
    plane pair (wrapping around), each satellite is matched to the
    nearest-phase satellite of the next plane; the differences folded into
    [0, g) give the pair's modal offset and its F = round(offset * T / 360).
    The modal F across pairs is reported.
    """
    populated = [np.mod(np.asarray(p, dtype=float), 360.0) for p in plane_phases if len(p)]
    P = len(populated)
    if P < 2:
        raise ValueError("need at least two populated planes")
    S = int(round(360.0 / g))
    T = P * S
    pair_offsets = []
    for k in range(P):
        a, b = populated[k], populated[(k + 1) % P]
        if k == P - 1 and P == 2:
            break
        diff = np.mod(b[None, :] - a[:, None] + 180.0, 360.0) - 180.0
        nearest = diff[np.arange(len(a)), np.argmin(np.abs(diff), axis=1)]
        pair_offsets.append(_circular_mode(np.mod(nearest, g), g, bin_width))
    pair_F = [int(round(off * T / 360.0)) % P for off in pair_offsets]
    counts = Counter(pair_F)
    best = max(counts.values())
    F = min(f for f, c in counts.items() if c == best)
    chosen = np.array([off for off, f in zip(pair_offsets, pair_F) if f == F])
    delta_phi = _circular_mode(chosen, g, bin_width) if len(chosen) > 1 else float(chosen[0])
    return WalkerEstimate(float(inclination), T, P, F, delta_phi, tuple(pair_F))


def walker_from_shell(
    states: DailyStateTable,
    planes: PlaneAssignment,
    per_plane: Mapping[int, PlaneClassification],
    g: float,
    bin_width: float = 0.25,
) -> WalkerEstimate:
    idx = states.index_of()
    phases = []
    for p in range(planes.n_planes):
        pc = per_plane.get(p)
        if pc is None:
            continue
        holders = sorted(pc.slot_holders)
        phases.append([states.u_deg[idx[n]] for n in holders if n in idx])
    inclination = float(np.median(states.incl_deg)) if len(states) else float("nan")
    return estimate_walker(phases, g, inclination, bin_width)
