"""Lifecycle phases, lifetimes and Kaplan-Meier survival."""

from __future__ import annotations

import datetime as dt
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import SatCatEntry
from .shells import ShellAssignment, ShellId
from .store import DailyStateTable


@dataclass(frozen=True)
class LifecycleRecord:
    norad_id: int
    first_seen: dt.date
    last_seen: dt.date
    operational_shell: ShellId
    t_enter: dt.date
    t_exit: dt.date
    censored: bool

    @property
    def ascent_days(self) -> int:
        return (self.t_enter - self.first_seen).days

    @property
    def operational_days(self) -> int:
        return (self.t_exit - self.t_enter).days

    @property
    def descent_days(self) -> int:
        return (self.last_seen - self.t_exit).days


@dataclass(frozen=True)
class AltitudeHistory:
    """One satellite's daily mean altitude and shell label."""

    norad_id: int
    dates: tuple[dt.date, ...]
    altitudes: np.ndarray
    shells: tuple[ShellId | None, ...]


@dataclass(frozen=True)
class Lifetime:
    norad_id: int
    first: dt.date
    last: dt.date
    duration: int
    censored: bool


@dataclass(frozen=True)
class SurvivalCurve:
    """Product-limit estimate on a daily grid t = 0, 1, ..., t_max."""

    t: np.ndarray
    n: np.ndarray
    d: np.ndarray
    S: np.ndarray

    @property
    def F(self) -> np.ndarray:
        return failure_curve(self)

    def at(self, day: float) -> float:
        """S(day) as a right-continuous step function."""
        if day < 0:
            return 1.0
        k = min(int(np.floor(day)), len(self.S) - 1)
        return float(self.S[k])


def collect_histories(
    tables: Sequence[DailyStateTable],
    assignments: Mapping[dt.date, ShellAssignment],
) -> dict[int, AltitudeHistory]:
    """Group per-day mean altitudes and shell labels by satellite."""
    rows: dict[int, list[tuple[dt.date, float, ShellId | None]]] = {}
    for table in sorted(tables, key=lambda t: t.date):
        labels = assignments[table.date].labels if table.date in assignments else {}
        for n, alt in zip(table.norad_id.tolist(), table.alt_km.tolist()):
            rows.setdefault(n, []).append((table.date, alt, labels.get(n)))
    return {
        n: AltitudeHistory(n, tuple(r[0] for r in v), np.array([r[1] for r in v]), tuple(r[2] for r in v))
        for n, v in sorted(rows.items())
    }


def modal_shell(shells: Iterable[ShellId | None]) -> ShellId | None:
    counts = Counter(s for s in shells if s is not None)
    if not counts:
        return None
    best = max(counts.values())
    return min(s for s, c in counts.items() if c == best)


def segment(
    history: AltitudeHistory,
    margin_km: float = 10.0,
    dataset_end: dt.date | None = None,
) -> LifecycleRecord | None:
    """Split one altitude history into ascent, operational and descent.

    The operational shell is the shell holding the satellite on the most days.
    Returns None when the satellite is never within ``margin_km`` of it.
    """
    shell = modal_shell(history.shells)
    if shell is None or not history.dates:
        return None
    inside = np.flatnonzero(np.abs(history.altitudes - shell.altitude_center) <= margin_km)
    if len(inside) == 0:
        return None
    last = history.dates[-1]
    return LifecycleRecord(
        norad_id=history.norad_id,
        first_seen=history.dates[0],
        last_seen=last,
        operational_shell=shell,
        t_enter=history.dates[inside[0]],
        t_exit=history.dates[inside[-1]],
        censored=dataset_end is not None and last >= dataset_end,
    )


def segment_all(
    histories: Mapping[int, AltitudeHistory],
    margin_km: float = 10.0,
    dataset_end: dt.date | None = None,
) -> tuple[list[LifecycleRecord], list[int]]:
    """Segment every history; the second item lists never-operational satellites."""
    records, never = [], []
    for n in sorted(histories):
        rec = segment(histories[n], margin_km, dataset_end)
        if rec is None:
            never.append(n)
        else:
            records.append(rec)
    return records, never


def lifetimes(
    satcat: Iterable[SatCatEntry],
    coverage: Mapping[int, tuple[dt.date, dt.date]],
    dataset_end: dt.date,
) -> list[Lifetime]:
    """Per-satellite durations; decayed satellites are events, the rest censored.

    ``coverage`` maps norad_id to the first and last dates it appears in the
    element catalog. Satellites missing from the coverage fall back to their
    catalog launch and decay dates.
    """
    out = []
    for entry in sorted(satcat, key=lambda e: e.norad_id):
        first, last = coverage.get(entry.norad_id, (entry.launch_date, entry.decay_date or dataset_end))
        if entry.decay_date is not None and entry.decay_date <= dataset_end:
            out.append(Lifetime(entry.norad_id, first, last, (last - first).days, False))
        else:
            out.append(Lifetime(entry.norad_id, first, dataset_end, (dataset_end - first).days, True))
    return out


def kaplan_meier(durations, censored, horizon: int | None = None) -> SurvivalCurve:
    """Product-limit survival on integer days.

    Subjects censored at day t remain at risk for deaths on day t and leave
    the risk set afterwards.
    """
    durations = np.asarray(durations, dtype=float)
    censored = np.asarray(censored, dtype=bool)
    if durations.shape != censored.shape:
        raise ValueError("durations and censored flags differ in length")
    if np.any(durations < 0):
        raise ValueError("negative duration")
    days = np.floor(durations).astype(np.int64)
    t_max = int(days.max()) if len(days) else 0
    if horizon is not None:
        t_max = max(t_max, int(horizon))
    deaths = np.bincount(days[~censored], minlength=t_max + 1)[: t_max + 1]
    leaving = np.bincount(days, minlength=t_max + 1)[: t_max + 1]
    at_risk = len(days) - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    if len(days) and not deaths.any():
        warnings.warn("no uncensored events; survival is identically 1", RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(at_risk > 0, 1.0 - deaths / np.maximum(at_risk, 1), 1.0)
    S = np.cumprod(factor)
    return SurvivalCurve(np.arange(t_max + 1), at_risk.astype(np.int64), deaths.astype(np.int64), S)


def failure_curve(curve: SurvivalCurve) -> np.ndarray:
    """Daily failure probability F(t) = (S(t-1) - S(t)) / S(t-1); F(0) = 1 - S(0).

    Undefined (NaN) once the previous survival value is zero.
    """
    prev = np.concatenate([[1.0], curve.S[:-1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(prev > 0, (prev - curve.S) / prev, np.nan)
    return F


def baseline_rate(curve: SurvivalCurve, start: int = 1, end: int = 1000) -> float:
    """Mean daily failure probability over days ``start`` to ``end`` inclusive."""
    F = failure_curve(curve)
    stop = min(end, len(F) - 1)
    if stop < end:
        warnings.warn(f"curve ends at day {len(F) - 1}, before window end {end}", RuntimeWarning, stacklevel=2)
    window = F[start : stop + 1]
    if np.isnan(window).any():
        warnings.warn("survival reaches zero inside the window; truncated", RuntimeWarning, stacklevel=2)
        window = window[: int(np.argmax(np.isnan(window)))]
    return float(window.mean()) if len(window) else 0.0
