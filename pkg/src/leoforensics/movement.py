"""Maneuver detection against shell-wide daily drift, streak grouping and cause labels."""

from __future__ import annotations

import bisect
import datetime as dt
import enum
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import orbital
from .ingest import ConjunctionEvent
from .store import DailyStateTable, reference_instant


class Param(str, enum.Enum):
    PHASE = "PHASE"
    ALTITUDE = "ALTITUDE"
    RAAN = "RAAN"


class EventType(str, enum.Enum):
    ALTITUDE = "ALTITUDE"
    PHASING = "PHASING"
    COMBINATION = "COMBINATION"


class Cause(str, enum.Enum):
    COLLISION_AVOIDANCE = "COLLISION_AVOIDANCE"
    INITIAL_POSITIONING = "INITIAL_POSITIONING"
    OTHER = "OTHER"


_MAD_TO_STD = 1.4826
# spreads at or below catalog resolution count as zero (deg, km, deg)
MIN_SCALE = {Param.PHASE: 1e-4, Param.ALTITUDE: 1e-3, Param.RAAN: 1e-4}


@dataclass(frozen=True)
class DayPairDelta:
    date0: dt.date
    date1: dt.date
    tick0: dt.datetime
    tick1: dt.datetime
    norad_id: np.ndarray
    values: dict[Param, np.ndarray]
    median: dict[Param, float]
    scale: dict[Param, float]

    def __len__(self) -> int:
        return len(self.norad_id)


@dataclass(frozen=True)
class MovementFlag:
    norad_id: int
    date: dt.date
    params: frozenset[Param]
    sigmas: dict[Param, float]


@dataclass(frozen=True)
class MovementEvent:
    norad_id: int
    start: dt.date
    end: dt.date
    params: frozenset[Param]
    max_sigma: float
    cause: Cause | None = None

    @property
    def length(self) -> int:
        return (self.end - self.start).days + 1

    @property
    def type(self) -> EventType:
        if self.params == {Param.ALTITUDE}:
            return EventType.ALTITUDE
        if self.params == {Param.PHASE}:
            return EventType.PHASING
        return EventType.COMBINATION


def fold(values):
    """Fold angles in degrees into [-180, 180)."""
    return np.mod(np.asarray(values, dtype=float) + 180.0, 360.0) - 180.0


def _scale(x: np.ndarray, m: float, kind: str) -> float:
    if kind == "std":
        return float(np.std(x))
    if kind == "mad":
        return float(_MAD_TO_STD * np.median(np.abs(x - m)))
    raise ValueError(f"unknown scale {kind!r}")


def compute_deltas(
    day0: DailyStateTable,
    day1: DailyStateTable,
    members: Iterable[int] | None = None,
    min_common: int = 25,
    scale: str = "std",
) -> DayPairDelta | None:
    """Per-satellite changes between two phase-aligned instants.

    The first instant is day0's 12:00 UTC; the second is a whole number of
    shell periods later, the multiple closest to one day. Day1's states are
    advanced to it so a satellite keeping its slot shows only the common
    drift. ``members`` restricts the comparison to one shell's satellites on
    day0. Returns None (with a warning) below ``min_common`` satellites.
    """
    ids = day0.norad_id if members is None else np.intersect1d(day0.norad_id, np.fromiter(members, np.int64))
    common = np.intersect1d(ids, day1.norad_id)
    if len(common) < min_common:
        warnings.warn(f"{day0.date}->{day1.date}: {len(common)} common satellites < {min_common}; skipped",
                      RuntimeWarning, stacklevel=2)
        return None
    a = day0.select(common)
    b = day1.select(common)
    period = float(np.median(orbital.SECONDS_PER_DAY / a.mean_motion_revday))
    tick0 = reference_instant(day0.date)
    step = orbital.best_multiple(period, (reference_instant(day1.date) - tick0).total_seconds()) * period
    tick1 = tick0 + dt.timedelta(seconds=step)
    b = b.advanced_to(tick1)
    values = {
        Param.PHASE: fold(b.u_deg - a.u_deg),
        Param.ALTITUDE: b.apogee_km - a.apogee_km,
        Param.RAAN: fold(b.raan_deg - a.raan_deg),
    }
    median = {}
    for p, x in values.items():
        m = float(np.median(x))
        if p is not Param.ALTITUDE:
            # re-centre circular values on their median before statistics
            x = m + fold(x - m)
            values[p] = x
            m = float(np.median(x))
        median[p] = m
    scales = {p: _scale(x, median[p], scale) for p, x in values.items()}
    return DayPairDelta(day0.date, day1.date, tick0, tick1, a.norad_id, values, median, scales)


def detect(delta: DayPairDelta, n_sigma: float = 5.0,
           min_scale: Mapping[Param, float] | None = None) -> list[MovementFlag]:
    """Flag satellites whose change deviates from the shell median by at least n_sigma scales.

    A parameter whose scale is at or below its ``min_scale`` (default: catalog
    resolution) yields no flags. Flags are dated to the second day of the pair.
    """
    min_scale = MIN_SCALE if min_scale is None else min_scale
    dev = {}
    for p, x in delta.values.items():
        s = delta.scale[p]
        if s <= min_scale.get(p, 0.0):
            warnings.warn(f"{delta.date1}: zero spread in {p.value}; no flags", RuntimeWarning, stacklevel=2)
            continue
        dev[p] = np.abs(x - delta.median[p]) / s
    flags = []
    for i, n in enumerate(delta.norad_id.tolist()):
        hit = {p: float(d[i]) for p, d in dev.items() if d[i] >= n_sigma}
        if hit:
            flags.append(MovementFlag(n, delta.date1, frozenset(hit), hit))
    return flags


def detect_range(
    tables: Sequence[DailyStateTable],
    members_by_date: Mapping[dt.date, Iterable[int]] | None = None,
    n_sigma: float = 5.0,
    min_common: int = 25,
    scale: str = "std",
) -> tuple[list[MovementFlag], list[DayPairDelta]]:
    """Run compute_deltas and detect over consecutive stored dates."""
    tables = sorted(tables, key=lambda t: t.date)
    flags, deltas = [], []
    for a, b in zip(tables, tables[1:]):
        if (b.date - a.date).days != 1:
            continue
        members = None if members_by_date is None else members_by_date.get(a.date, ())
        delta = compute_deltas(a, b, members, min_common, scale)
        if delta is None:
            continue
        deltas.append(delta)
        flags.extend(detect(delta, n_sigma))
    return flags, deltas


def streaks(flags: Iterable[MovementFlag]) -> list[MovementEvent]:
    """Group each satellite's flags into maximal runs of consecutive days."""
    by_sat: dict[int, list[MovementFlag]] = defaultdict(list)
    for f in flags:
        by_sat[f.norad_id].append(f)
    events = []
    for n in sorted(by_sat):
        run: list[MovementFlag] = []
        for f in sorted(by_sat[n], key=lambda f: f.date):
            if run and (f.date - run[-1].date).days > 1:
                events.append(_event(run))
                run = []
            if run and f.date == run[-1].date:
                run[-1] = MovementFlag(n, f.date, run[-1].params | f.params, {**run[-1].sigmas, **f.sigmas})
            else:
                run.append(f)
        if run:
            events.append(_event(run))
    return events


def _event(run: Sequence[MovementFlag]) -> MovementEvent:
    params = frozenset().union(*(f.params for f in run))
    max_sigma = max(s for f in run for s in f.sigmas.values())
    return MovementEvent(run[0].norad_id, run[0].date, run[-1].date, params, max_sigma)


class ConjunctionIndex:
    """Conjunction TCAs per satellite above a probability threshold, sorted by time."""

    def __init__(self, conjunctions: Iterable[ConjunctionEvent], min_probability: float = 3e-7):
        by_sat: dict[int, list[dt.date]] = defaultdict(list)
        for c in conjunctions:
            if c.max_probability >= min_probability:
                by_sat[c.sat1_id].append(c.tca.date())
                by_sat[c.sat2_id].append(c.tca.date())
        self._dates = {n: sorted(v) for n, v in by_sat.items()}

    def any_between(self, norad_id: int, lo: dt.date, hi: dt.date) -> bool:
        dates = self._dates.get(norad_id)
        if not dates:
            return False
        k = bisect.bisect_left(dates, lo)
        return k < len(dates) and dates[k] <= hi


def classify(
    event: MovementEvent,
    conjunctions: ConjunctionIndex,
    first_seen: dt.date | None,
    window_days: int = 1,
    initial_days: int = 15,
) -> Cause:
    """Collision avoidance if a qualifying conjunction falls within the event
    widened by ``window_days``; initial positioning if the event starts within
    ``initial_days`` of first appearance; otherwise other."""
    pad = dt.timedelta(days=window_days)
    if conjunctions.any_between(event.norad_id, event.start - pad, event.end + pad):
        return Cause.COLLISION_AVOIDANCE
    if first_seen is not None and (event.start - first_seen).days <= initial_days:
        return Cause.INITIAL_POSITIONING
    return Cause.OTHER


def classify_all(
    events: Iterable[MovementEvent],
    conjunctions: ConjunctionIndex,
    first_seen: Mapping[int, dt.date],
    window_days: int = 1,
    initial_days: int = 15,
) -> list[MovementEvent]:
    out = []
    for e in events:
        cause = classify(e, conjunctions, first_seen.get(e.norad_id), window_days, initial_days)
        out.append(MovementEvent(e.norad_id, e.start, e.end, e.params, e.max_sigma, cause))
    return out


def phasing_altitude_coupling(events: Iterable[MovementEvent]) -> float | None:
    """Share of events with phase flags that carry no altitude flag; None without phase events."""
    phase = [e for e in events if Param.PHASE in e.params]
    if not phase:
        return None
    return sum(Param.ALTITUDE not in e.params for e in phase) / len(phase)


def daily_counts(events: Iterable[MovementEvent]) -> dict[dt.date, dict[str, int]]:
    """Per-day count of active events by type and by cause."""
    counts: dict[dt.date, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for e in events:
        d = e.start
        while d <= e.end:
            counts[d][e.type.value] += 1
            if e.cause is not None:
                counts[d][e.cause.value] += 1
            d += dt.timedelta(days=1)
    return {d: dict(counts[d]) for d in sorted(counts)}
