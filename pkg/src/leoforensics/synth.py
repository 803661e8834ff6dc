"""Synthetic Walker-Delta constellations with scripted events and a ground-truth log.

Dynamics are Kepler plus a common per-shell drift: every satellite of a shell
advances by the same phase and RAAN each day, so any per-satellite change is
either configured noise or a scripted event and the truth is exact.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import orbital
from .ingest import ConjunctionEvent, SatCatEntry, TleRecord, format_tle
from .shells import ShellId
from .store import DailyStateTable, write_table

BASE_NORAD_ID = 44000


@dataclass(frozen=True)
class ShellSpec:
    inclination: float
    total: int
    planes: int
    phasing: int
    altitude: float
    raan0: float = 0.0
    u0: float = 0.0
    # (plane, slot, offset deg) companions placed next to a slot
    companions: tuple[tuple[int, int, float], ...] = ()
    # (plane, slot) slots left empty
    vacant: tuple[tuple[int, int], ...] = ()
    generation: str = "v1.5"

    @property
    def sats_per_plane(self) -> int:
        return self.total // self.planes

    @property
    def label(self) -> str:
        return ShellId.from_centers(self.inclination, self.altitude).label


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of day-to-day changes (deg, km, deg per day)."""

    sigma_u: float = 0.02
    sigma_h: float = 0.05
    sigma_raan: float = 0.005


@dataclass(frozen=True)
class Maneuver:
    norad_id: int
    start: int  # day index of the first changed state
    duration: int
    dh_per_day: float = 0.0
    du_per_day: float = 0.0
    draan_per_day: float = 0.0

    @property
    def end(self) -> int:
        return self.start + self.duration - 1


@dataclass(frozen=True)
class Deorbit:
    norad_id: int
    day: int  # last day present


@dataclass(frozen=True)
class Launch:
    """A batch entering one plane of a shell and climbing to its altitude.

    Ascent days lie strictly more than twice the lifecycle margin below the
    shell; the first in-shell day is ``day + ascent_days``. With
    ``operational_days`` set, the batch leaves the shell afterwards, spends
    ``descent_days`` below it and disappears.
    """

    shell: int
    plane: int
    count: int
    day: int
    insertion_altitude: float = 300.0
    ascent_days: int = 60
    operational_days: int | None = None
    descent_days: int = 0
    margin_km: float = 10.0


@dataclass(frozen=True)
class Conjunction:
    norad_id: int
    day: float  # TCA in days since 00:00 UTC of the start date
    probability: float
    other_id: int = 99999


@dataclass(frozen=True)
class SynthConfig:
    shells: tuple[ShellSpec, ...]
    start: dt.date = dt.date(2024, 1, 1)
    days: int = 10
    noise: NoiseSpec = NoiseSpec(0.0, 0.0, 0.0)
    phase_jitter: float = 0.0
    raan_jitter: float = 0.0
    maneuvers: tuple[Maneuver, ...] = ()
    deorbits: tuple[Deorbit, ...] = ()
    launches: tuple[Launch, ...] = ()
    conjunctions: tuple[Conjunction, ...] = ()
    seed: int = 0

    def __post_init__(self):
        for s in self.shells:
            if s.planes <= 0 or s.total % s.planes:
                raise ValueError(f"shell {s.label}: T={s.total} not divisible by P={s.planes}")
            if not 0 <= s.phasing < s.planes:
                raise ValueError(f"shell {s.label}: F={s.phasing} outside [0, P-1]")
        if self.days < 1:
            raise ValueError("days must be positive")
        _check_events(self)


def _check_events(config: SynthConfig) -> None:
    by_sat: dict[int, list[Maneuver]] = {}
    for m in config.maneuvers:
        if m.duration < 1:
            raise ValueError(f"maneuver on {m.norad_id}: duration must be positive")
        for other in by_sat.get(m.norad_id, []):
            if m.start <= other.end and other.start <= m.end:
                raise ValueError(f"overlapping maneuvers for satellite {m.norad_id}")
        by_sat.setdefault(m.norad_id, []).append(m)
    last = {}
    for d in config.deorbits:
        if d.norad_id in last:
            raise ValueError(f"satellite {d.norad_id} deorbited twice")
        last[d.norad_id] = d.day
    for m in config.maneuvers:
        if m.norad_id in last and m.end > last[m.norad_id]:
            raise ValueError(f"maneuver on {m.norad_id} continues after its deorbit")


def observed_shells(scale: float = 1.0) -> tuple[ShellSpec, ...]:
    """Nine shells at the observed end-2025 (inclination, altitude) pairs.

    Plane counts and slots are chosen so the whole constellation has about
    5,000 satellites at ``scale`` 1.
    """
    layout = [
        (53.0, 552, 36, 18, 1, "v1"),
        (53.2, 540, 36, 18, 5, "v1.5"),
        (53.2, 484, 72, 16, 7, "v2 mini"),
        (53.2, 354, 20, 15, 3, "v2 mini"),
        (43.0, 559, 30, 20, 11, "v1.5"),
        (43.0, 489, 36, 15, 2, "v2 mini"),
        (43.0, 355, 20, 15, 9, "v2 mini"),
        (70.0, 570, 36, 16, 4, "v1.5"),
        (97.6, 557, 12, 36, 1, "v1.5"),
    ]
    out = []
    for k, (inc, alt, P, S, F, gen) in enumerate(layout):
        S = max(3, int(round(S * scale)))
        out.append(ShellSpec(inc, P * S, P, F % P, float(alt), raan0=7.0 * k, u0=3.0 * k, generation=gen))
    return tuple(out)


# ---------------------------------------------------------------- config I/O

def _build(cls, raw: dict[str, Any]):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise KeyError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    raw = dict(raw)
    for f in dataclasses.fields(cls):
        # YAML 1.1 reads exponent-only numbers such as 1e-5 as strings
        if isinstance(raw.get(f.name), str) and f.type in ("float", float):
            raw[f.name] = float(raw[f.name])
    return cls(**raw)


def config_from_mapping(raw: dict[str, Any]) -> SynthConfig:
    raw = dict(raw)
    shells = raw.pop("shells", "observed")
    if shells == "observed":
        shells = observed_shells()
    else:
        shells = tuple(
            _build(ShellSpec, {**s, "companions": tuple(tuple(c) for c in s.get("companions", ())),
                               "vacant": tuple(tuple(v) for v in s.get("vacant", ()))})
            for s in shells
        )
    noise = raw.pop("noise", None)
    noise = NoiseSpec() if noise == "calibrated" else NoiseSpec(0.0, 0.0, 0.0) if not noise else _build(NoiseSpec, noise)
    start = raw.pop("start", dt.date(2024, 1, 1))
    if isinstance(start, str):
        start = dt.date.fromisoformat(start)
    events = {
        "maneuvers": Maneuver, "deorbits": Deorbit, "launches": Launch, "conjunctions": Conjunction,
    }
    built = {k: tuple(_build(cls, e) for e in raw.pop(k, ()) or ()) for k, cls in events.items()}
    return _build(SynthConfig, {**raw, "shells": shells, "noise": noise, "start": start, **built})


def load_synth_config(path: str | Path) -> SynthConfig:
    text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return config_from_mapping(raw or {})


# ---------------------------------------------------------------- generation

@dataclass
class _Sat:
    norad_id: int
    shell: int
    plane: int
    slot: int | None
    role: str
    u0: float
    raan0: float
    first: int = 0
    last: int | None = None
    launch: Launch | None = None


@dataclass
class SynthResult:
    config: SynthConfig
    tables: list[DailyStateTable]
    truth: dict[str, Any]
    satcat: list[SatCatEntry]
    conjunctions: list[ConjunctionEvent] = field(default_factory=list)

    @property
    def dates(self) -> list[dt.date]:
        return [t.date for t in self.tables]


def _layout(config: SynthConfig, rng: np.random.Generator) -> list[_Sat]:
    sats: list[_Sat] = []
    next_id = BASE_NORAD_ID
    for k, shell in enumerate(config.shells):
        P, S, T = shell.planes, shell.sats_per_plane, shell.total
        vacant = set(shell.vacant)
        for p in range(P):
            raan = shell.raan0 + 360.0 * p / P
            for s in range(S):
                u = shell.u0 + 360.0 * s / S + 360.0 * shell.phasing * p / T
                if (p, s) not in vacant:
                    sats.append(_Sat(next_id, k, p, s, "slot", u, raan))
                next_id += 1
        for p, s, offset in shell.companions:
            u = shell.u0 + 360.0 * s / S + 360.0 * shell.phasing * p / T + offset
            sats.append(_Sat(next_id, k, p, s, "companion", u, shell.raan0 + 360.0 * p / P))
            next_id += 1
    for launch in config.launches:
        shell = config.shells[launch.shell]
        P, S, T = shell.planes, shell.sats_per_plane, shell.total
        for j in range(launch.count):
            # batches sit half a slot behind the grid, spread within that gap
            u = (shell.u0 + 360.0 * (j + 0.5) / max(launch.count, S) + 360.0 * shell.phasing * launch.plane / T)
            last = None
            if launch.operational_days is not None:
                last = launch.day + launch.ascent_days + launch.operational_days + launch.descent_days
            sats.append(_Sat(next_id, launch.shell, launch.plane, None, "launch", u,
                             shell.raan0 + 360.0 * launch.plane / P, launch.day, last, launch))
            next_id += 1
    if config.phase_jitter:
        for s in sats:
            s.u0 += float(rng.normal(0.0, config.phase_jitter))
    if config.raan_jitter:
        for s in sats:
            s.raan0 += float(rng.normal(0.0, config.raan_jitter))
    deorbit = {d.norad_id: d.day for d in config.deorbits}
    for s in sats:
        if s.norad_id in deorbit:
            s.last = deorbit[s.norad_id] if s.last is None else min(s.last, deorbit[s.norad_id])
    return sats


def _launch_altitude(launch: Launch, target: float, k: int) -> float:
    """Altitude on day k after the batch's first day."""
    below = target - 2.0 * launch.margin_km
    if k < launch.ascent_days:
        return launch.insertion_altitude + (below - launch.insertion_altitude) * k / launch.ascent_days
    if launch.operational_days is None or k <= launch.ascent_days + launch.operational_days:
        return target
    j = k - launch.ascent_days - launch.operational_days  # 1..descent_days
    floor = orbital.DECAY_ALTITUDE_KM + 100.0
    return below - (below - floor) * (j - 1) / max(launch.descent_days, 1)


def generate(config: SynthConfig) -> SynthResult:
    """Daily snapshot tables, SatCat and truth log for a configuration (deterministic in the seed)."""
    root = np.random.SeedSequence(config.seed)
    layout_seed, noise_seed = root.spawn(2)
    sats = _layout(config, np.random.default_rng(layout_seed))
    n = len(sats)
    days = config.days
    ids = np.array([s.norad_id for s in sats], dtype=np.int64)
    shell_of = np.array([s.shell for s in sats])

    incl = np.array([config.shells[s.shell].inclination for s in sats])
    base_alt = np.array([config.shells[s.shell].altitude for s in sats])
    n_shell = orbital.mean_motion_from_altitude(np.array([sh.altitude for sh in config.shells]))
    n_shell = np.atleast_1d(n_shell)
    a_shell = orbital.R_EARTH_KM + np.array([sh.altitude for sh in config.shells])
    raan_rate, argp_rate = orbital.secular_rates(a_shell, 0.0, np.array([sh.inclination for sh in config.shells]))
    u_drift = np.mod(360.0 * n_shell + argp_rate * orbital.SECONDS_PER_DAY, 360.0)[shell_of]
    raan_drift = (raan_rate * orbital.SECONDS_PER_DAY)[shell_of]

    # scripted cumulative offsets, shape (days, n)
    d_alt = np.zeros((days, n))
    d_u = np.zeros((days, n))
    d_raan = np.zeros((days, n))
    col = {s.norad_id: i for i, s in enumerate(sats)}
    k = np.arange(days)
    for m in config.maneuvers:
        if m.norad_id not in col:
            raise ValueError(f"maneuver for unknown satellite {m.norad_id}")
        steps = np.clip(k - m.start + 1, 0, m.duration)
        i = col[m.norad_id]
        d_alt[:, i] += m.dh_per_day * steps
        d_u[:, i] += m.du_per_day * steps
        d_raan[:, i] += m.draan_per_day * steps

    # per-day noise; consecutive differences then carry the configured sigma
    rng = np.random.default_rng(noise_seed)
    root2 = np.sqrt(2.0)
    noise_u, noise_h, noise_r = (
        rng.normal(0.0, sigma / root2, (days, n)) if sigma else np.zeros((days, n))
        for sigma in (config.noise.sigma_u, config.noise.sigma_h, config.noise.sigma_raan)
    )

    present = np.zeros((days, n), dtype=bool)
    for i, s in enumerate(sats):
        stop = days - 1 if s.last is None else min(s.last, days - 1)
        present[s.first : stop + 1, i] = True
    alt = base_alt[None, :] + d_alt + noise_h
    for i, s in enumerate(sats):
        if s.launch is not None:
            target = config.shells[s.shell].altitude
            for day in range(s.first, days):
                alt[day, i] = _launch_altitude(s.launch, target, day - s.first) + d_alt[day, i] + noise_h[day, i]

    # The uniform advance holds at the shell's phase-aligned ticks (a whole
    # number of shell periods after 12:00), so each 12:00 phase carries the
    # offset its own mean motion accumulates over that tick difference.
    periods = orbital.SECONDS_PER_DAY / n_shell
    tick_dt = np.array([orbital.best_multiple(P) * P - orbital.SECONDS_PER_DAY for P in periods])[shell_of]
    n_all = np.atleast_1d(orbital.mean_motion_from_altitude(alt)).reshape(days, n)
    raan_all, argp_all = orbital.secular_rates(orbital.semi_major_axis(n_all), 0.0, incl[None, :])
    raan_ref, argp_ref = raan_rate[shell_of], argp_rate[shell_of]
    u_rate = 360.0 * (n_all - n_shell[shell_of][None, :]) / orbital.SECONDS_PER_DAY + (argp_all - argp_ref)
    u_comp = -np.cumsum(np.where(np.arange(days)[:, None] > 0, u_rate * tick_dt[None, :], 0.0), axis=0)
    raan_comp = -np.cumsum(np.where(np.arange(days)[:, None] > 0, (raan_all - raan_ref) * tick_dt[None, :], 0.0),
                           axis=0)
    u0 = np.array([s.u0 for s in sats])
    raan0 = np.array([s.raan0 for s in sats])
    tables = []
    for day in range(days):
        mask = present[day]
        u = u0 + day * u_drift + d_u[day] + noise_u[day] + u_comp[day]
        raan = raan0 + day * raan_drift + d_raan[day] + noise_r[day] + raan_comp[day]
        date = config.start + dt.timedelta(days=day)
        nm = np.atleast_1d(orbital.mean_motion_from_altitude(alt[day, mask]))
        tables.append(DailyStateTable.from_elements(
            date, ids[mask], incl[mask], raan[mask], np.zeros(mask.sum()), np.zeros(mask.sum()),
            np.mod(u[mask], 360.0), nm,
        ))

    truth = _truth(config, sats, present)
    satcat = _satcat(config, sats, present)
    conj = [
        ConjunctionEvent(c.norad_id, c.other_id,
                         _midnight(config.start) + dt.timedelta(days=c.day), c.probability, 1.0)
        for c in config.conjunctions
    ]
    conj.sort(key=lambda c: (c.tca, c.sat1_id, c.sat2_id))
    return SynthResult(config, tables, truth, satcat, conj)


def _day(config: SynthConfig, k: int) -> str:
    return (config.start + dt.timedelta(days=int(k))).isoformat()


def _presence(present: np.ndarray, i: int) -> tuple[int, int] | None:
    rows = np.flatnonzero(present[:, i])
    return (int(rows[0]), int(rows[-1])) if len(rows) else None


def _truth(config: SynthConfig, sats: list[_Sat], present: np.ndarray) -> dict[str, Any]:
    clustered = set()
    for k, shell in enumerate(config.shells):
        for p, s, _ in shell.companions:
            clustered.add((k, p, s))
    satellites = {}
    for i, s in enumerate(sats):
        span = _presence(present, i)
        if span is None:
            continue
        if s.role == "launch":
            cls = None
        else:
            cls = "TWIN_TRIAD" if (s.shell, s.plane, s.slot) in clustered else "REGULAR"
        satellites[str(s.norad_id)] = {
            "shell": config.shells[s.shell].label,
            "plane": s.plane,
            "slot": s.slot,
            "role": s.role,
            "class": cls,
            "first_seen": _day(config, span[0]),
            "last_seen": _day(config, span[1]),
        }
    shells = []
    for shell in config.shells:
        S = shell.sats_per_plane
        shells.append({
            "label": shell.label,
            "inclination": shell.inclination,
            "altitude": shell.altitude,
            "planes": shell.planes,
            "sats_per_plane": S,
            "total": shell.total,
            "phasing": shell.phasing,
            "regular_spacing": 360.0 / S,
            "delta_phi": (360.0 * shell.phasing / shell.total) % (360.0 / S),
        })
    first_seen = {s.norad_id: s.first for s in sats}
    conj_days: dict[int, list[float]] = {}
    for c in config.conjunctions:
        conj_days.setdefault(c.norad_id, []).append(c.day)
    maneuvers = []
    for m in sorted(config.maneuvers, key=lambda m: (m.norad_id, m.start)):
        params = [p for p, v in (("PHASE", m.du_per_day), ("ALTITUDE", m.dh_per_day), ("RAAN", m.draan_per_day)) if v]
        ca = any(
            m.start - 1 <= int(np.floor(c.day)) <= m.end + 1
            for c in config.conjunctions
            if c.norad_id == m.norad_id and c.probability >= 3e-7
        )
        if ca:
            cause = "COLLISION_AVOIDANCE"
        elif m.start - first_seen[m.norad_id] <= 15:
            cause = "INITIAL_POSITIONING"
        else:
            cause = "OTHER"
        maneuvers.append({
            "norad_id": m.norad_id,
            "start": _day(config, m.start),
            "end": _day(config, m.end),
            "length": m.duration,
            "params": params,
            "class": cause,
        })
    lifecycles = []
    for i, s in enumerate(sats):
        if s.launch is None:
            continue
        span = _presence(present, i)
        if span is None:
            continue
        L = s.launch
        enter = s.first + L.ascent_days
        exit_ = span[1] if L.operational_days is None else enter + L.operational_days
        if enter > span[1]:
            continue
        lifecycles.append({
            "norad_id": s.norad_id,
            "shell": config.shells[s.shell].label,
            "first_seen": _day(config, span[0]),
            "t_enter": _day(config, enter),
            "t_exit": _day(config, min(exit_, span[1])),
            "last_seen": _day(config, span[1]),
            "ascent": L.ascent_days,
            "operational": min(exit_, span[1]) - enter,
            "descent": span[1] - min(exit_, span[1]),
        })
    return {
        "start": config.start.isoformat(),
        "days": config.days,
        "seed": config.seed,
        "shells": shells,
        "satellites": satellites,
        "maneuvers": maneuvers,
        "deorbits": [{"norad_id": d.norad_id, "date": _day(config, d.day)} for d in config.deorbits],
        "lifecycles": lifecycles,
    }


def _midnight(date: dt.date) -> dt.datetime:
    return dt.datetime(date.year, date.month, date.day, tzinfo=dt.timezone.utc)


def _satcat(config: SynthConfig, sats: list[_Sat], present: np.ndarray) -> list[SatCatEntry]:
    out = []
    for i, s in enumerate(sats):
        span = _presence(present, i)
        if span is None:
            continue
        gen = config.shells[s.shell].generation
        decayed = s.last is not None and s.last < config.days - 1
        out.append(SatCatEntry(
            s.norad_id,
            f"SYNTH-{s.norad_id} {gen}",
            config.start + dt.timedelta(days=span[0]),
            config.start + dt.timedelta(days=span[1]) if decayed else None,
        ))
    return out


# ---------------------------------------------------------------- output

def tle_records(table: DailyStateTable) -> list[TleRecord]:
    """Element sets for one snapshot, epoch at the snapshot's 12:00 UTC instant."""
    t = table.instant
    return [
        TleRecord(
            norad_id=int(n), intl_designator="24001A", epoch=t, inclination=float(i), raan=float(r),
            eccentricity=float(e), arg_perigee=float(w), mean_anomaly=float(m), mean_motion=float(mm),
            bstar=0.0, line1_checksum=0, line2_checksum=0,
        )
        for n, i, r, e, w, m, mm in zip(table.norad_id, table.incl_deg, table.raan_deg, table.ecc,
                                        table.argp_deg, table.mean_anom_deg, table.mean_motion_revday)
    ]


def write(result: SynthResult, out: str | Path, tles: bool = False) -> Path:
    """Write states/, truth.json, satcat.csv, conjunctions.csv and optionally tle/ under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for table in result.tables:
        write_table(table, out / "states")
    (out / "truth.json").write_text(json.dumps(result.truth, indent=1, sort_keys=True) + "\n")
    with open(out / "satcat.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["NORAD_CAT_ID", "OBJECT_NAME", "LAUNCH_DATE", "DECAY_DATE"])
        for e in result.satcat:
            w.writerow([e.norad_id, e.object_name, e.launch_date.isoformat(),
                        e.decay_date.isoformat() if e.decay_date else ""])
    with open(out / "conjunctions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["NORAD_CAT_ID_1", "NORAD_CAT_ID_2", "TCA", "MAX_PROB", "TCA_RANGE"])
        for c in result.conjunctions:
            w.writerow([c.sat1_id, c.sat2_id, c.tca.strftime("%Y-%m-%d %H:%M:%S"),
                        f"{c.max_probability:.6e}", f"{c.miss_distance:.3f}"])
    if tles:
        tle_dir = out / "tle"
        tle_dir.mkdir(exist_ok=True)
        for table in result.tables:
            lines = []
            for rec in tle_records(table):
                lines.extend(format_tle(rec))
            (tle_dir / f"{table.date.isoformat()}.tle").write_text("\n".join(lines) + ("\n" if lines else ""))
    return out
