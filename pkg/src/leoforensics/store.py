"""Daily state snapshots and their on-disk store (``states/YYYY-MM-DD.csv``).

Each file holds one row per satellite for one date, evaluated at 12:00 UTC.
Columns, in order::

    norad_id, epoch, incl_deg, raan_deg, ecc, argp_deg, mean_anom_deg,
    mean_motion_revday, alt_km, apogee_km, u_deg, x_km, y_km, z_km, age_h

``epoch`` is the source TLE epoch (ISO 8601, UTC); ``age_h`` is the distance
between that epoch and the 12:00 UTC reference instant in hours.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import orbital

COLUMNS = (
    "norad_id",
    "epoch",
    "incl_deg",
    "raan_deg",
    "ecc",
    "argp_deg",
    "mean_anom_deg",
    "mean_motion_revday",
    "alt_km",
    "apogee_km",
    "u_deg",
    "x_km",
    "y_km",
    "z_km",
    "age_h",
)

_FORMATS = {
    "incl_deg": "{:.6f}",
    "raan_deg": "{:.6f}",
    "ecc": "{:.8f}",
    "argp_deg": "{:.6f}",
    "mean_anom_deg": "{:.6f}",
    "mean_motion_revday": "{:.10f}",
    "alt_km": "{:.4f}",
    "apogee_km": "{:.4f}",
    "u_deg": "{:.6f}",
    "x_km": "{:.4f}",
    "y_km": "{:.4f}",
    "z_km": "{:.4f}",
    "age_h": "{:.4f}",
}

REFERENCE_HOUR = 12


def reference_instant(date: dt.date) -> dt.datetime:
    return dt.datetime(date.year, date.month, date.day, REFERENCE_HOUR, tzinfo=dt.timezone.utc)


def format_epoch(t: dt.datetime) -> str:
    return t.astimezone(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_timestamp(text: str) -> dt.datetime:
    """Parse an ISO-like UTC timestamp ('T' or space separator, any fraction digits)."""
    s = text.strip().replace("T", " ")
    if s.endswith("Z"):
        s = s[:-1]
    s = s.split("+")[0] if "+" in s else s
    if "." in s:
        head, frac = s.split(".", 1)
        frac = (frac + "000000")[:6]
        s = f"{head}.{frac}"
    parsed = dt.datetime.fromisoformat(s)
    return parsed.replace(tzinfo=dt.timezone.utc)


def _epoch_array(values: Iterable[dt.datetime]) -> np.ndarray:
    return np.array([np.datetime64(v.astimezone(dt.timezone.utc).replace(tzinfo=None), "us") for v in values],
                    dtype="datetime64[us]")


@dataclass(frozen=True, eq=False)
class DailyStateTable:
    """All satellite states for one date at 12:00 UTC, stored column-wise."""

    date: dt.date
    norad_id: np.ndarray
    epoch: np.ndarray
    incl_deg: np.ndarray
    raan_deg: np.ndarray
    ecc: np.ndarray
    argp_deg: np.ndarray
    mean_anom_deg: np.ndarray
    mean_motion_revday: np.ndarray
    alt_km: np.ndarray
    apogee_km: np.ndarray
    u_deg: np.ndarray
    x_km: np.ndarray
    y_km: np.ndarray
    z_km: np.ndarray
    age_h: np.ndarray

    def __post_init__(self):
        n = len(self.norad_id)
        for f in fields(self)[1:]:
            arr = getattr(self, f.name)
            if f.name == "norad_id":
                arr = np.asarray(arr, dtype=np.int64)
            elif f.name == "epoch":
                arr = np.asarray(arr, dtype="datetime64[us]")
            else:
                arr = np.asarray(arr, dtype=float)
            if len(arr) != n:
                raise ValueError(f"column {f.name} has {len(arr)} rows, expected {n}")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, f.name, arr)
        if len(np.unique(self.norad_id)) != n:
            raise ValueError(f"{self.date}: duplicate norad_id rows")

    def __len__(self) -> int:
        return len(self.norad_id)

    @property
    def instant(self) -> dt.datetime:
        return reference_instant(self.date)

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x_km, self.y_km, self.z_km])

    def columns(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in COLUMNS}

    def take(self, index) -> "DailyStateTable":
        """Rows selected by a boolean mask or integer index array."""
        cols = {name: arr[index] for name, arr in self.columns().items()}
        return DailyStateTable(date=self.date, **cols)

    def select(self, norad_ids: Iterable[int]) -> "DailyStateTable":
        wanted = np.fromiter(norad_ids, dtype=np.int64)
        return self.take(np.isin(self.norad_id, wanted))

    def index_of(self) -> dict[int, int]:
        return {int(n): i for i, n in enumerate(self.norad_id)}

    @classmethod
    def empty(cls, date: dt.date) -> "DailyStateTable":
        cols = {name: np.empty(0) for name in COLUMNS}
        cols["norad_id"] = np.empty(0, dtype=np.int64)
        cols["epoch"] = np.empty(0, dtype="datetime64[us]")
        return cls(date=date, **cols)

    @classmethod
    def from_states(
        cls, date: dt.date, rows: Iterable[tuple[dt.datetime, orbital.OrbitalState]]
    ) -> "DailyStateTable":
        """Build from (source_epoch, state) pairs; rows are sorted by norad_id."""
        rows = sorted(rows, key=lambda r: r[1].norad_id)
        if not rows:
            return cls.empty(date)
        ref = reference_instant(date)
        epochs = [r[0] for r in rows]
        states = [r[1] for r in rows]
        pos = np.array([s.position for s in states], dtype=float).reshape(-1, 3)
        return cls(
            date=date,
            norad_id=np.array([s.norad_id for s in states]),
            epoch=_epoch_array(epochs),
            incl_deg=np.array([s.inclination for s in states]),
            raan_deg=np.array([s.raan for s in states]),
            ecc=np.array([s.eccentricity for s in states]),
            argp_deg=np.array([s.arg_perigee for s in states]),
            mean_anom_deg=np.array([s.mean_anomaly for s in states]),
            mean_motion_revday=np.array([s.mean_motion for s in states]),
            alt_km=np.array([s.mean_altitude for s in states]),
            apogee_km=np.array([s.apogee_altitude for s in states]),
            u_deg=np.array([s.phase for s in states]),
            x_km=pos[:, 0],
            y_km=pos[:, 1],
            z_km=pos[:, 2],
            age_h=np.array([abs((e - ref).total_seconds()) / 3600.0 for e in epochs]),
        )

    @classmethod
    def from_elements(
        cls,
        date: dt.date,
        norad_id,
        incl_deg,
        raan_deg,
        ecc,
        argp_deg,
        mean_anom_deg,
        mean_motion_revday,
        epoch=None,
    ) -> "DailyStateTable":
        """Derive every column from mean elements at the 12:00 UTC instant."""
        norad_id = np.asarray(norad_id, dtype=np.int64)
        order = np.argsort(norad_id, kind="stable")
        incl = np.asarray(incl_deg, dtype=float)[order]
        raan = np.mod(np.asarray(raan_deg, dtype=float)[order], 360.0)
        e = np.asarray(ecc, dtype=float)[order]
        argp = np.mod(np.asarray(argp_deg, dtype=float)[order], 360.0)
        M = np.mod(np.asarray(mean_anom_deg, dtype=float)[order], 360.0)
        n = np.asarray(mean_motion_revday, dtype=float)[order]
        a = np.atleast_1d(orbital.semi_major_axis(n)) if len(n) else np.empty(0)
        nu = orbital.true_anomaly(M, e) if len(n) else np.empty(0)
        u = np.mod(argp + nu, 360.0)
        pos = orbital.positions(a, e, incl, raan, u, nu).reshape(-1, 3)
        ref = reference_instant(date)
        if epoch is None:
            epochs = np.full(len(n), np.datetime64(ref.replace(tzinfo=None), "us"))
        else:
            epochs = np.asarray(epoch, dtype="datetime64[us]")[order]
        age = np.abs((epochs - np.datetime64(ref.replace(tzinfo=None), "us")).astype(float)) / 3.6e9
        return cls(
            date=date,
            norad_id=norad_id[order],
            epoch=epochs,
            incl_deg=incl,
            raan_deg=raan,
            ecc=e,
            argp_deg=argp,
            mean_anom_deg=M,
            mean_motion_revday=n,
            alt_km=a - orbital.R_EARTH_KM,
            apogee_km=a * (1.0 + e) - orbital.R_EARTH_KM,
            u_deg=u,
            x_km=pos[:, 0],
            y_km=pos[:, 1],
            z_km=pos[:, 2],
            age_h=age,
        )

    def advanced_to(self, t: dt.datetime) -> "DailyStateTable":
        """Secularly advance every row from 12:00 UTC to ``t`` (two-body + J2).

        Used to evaluate a whole shell at a phase-aligned reference instant.
        The returned table keeps this table's date.
        """
        dt_s = (t - self.instant).total_seconds()
        a = np.atleast_1d(orbital.semi_major_axis(self.mean_motion_revday)) if len(self) else np.empty(0)
        raan_rate, argp_rate = orbital.secular_rates(a, self.ecc, self.incl_deg)
        M = self.mean_anom_deg + 360.0 * self.mean_motion_revday * dt_s / orbital.SECONDS_PER_DAY
        table = DailyStateTable.from_elements(
            self.date,
            self.norad_id,
            self.incl_deg,
            self.raan_deg + raan_rate * dt_s,
            self.ecc,
            self.argp_deg + argp_rate * dt_s,
            M,
            self.mean_motion_revday,
            epoch=self.epoch,
        )
        return table


def write_table(table: DailyStateTable, directory: str | Path) -> Path:
    """Write one date file atomically (temp file + rename)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{table.date.isoformat()}.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    cols = table.columns()
    for i in range(len(table)):
        row = [str(int(cols["norad_id"][i])), _format_dt64(cols["epoch"][i])]
        row.extend(_FORMATS[name].format(float(cols[name][i])) for name in COLUMNS[2:])
        writer.writerow(row)
    tmp = path.with_suffix(".csv.tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, path)
    return path


def _format_dt64(value: np.datetime64) -> str:
    return np.datetime_as_string(value, unit="us") + "Z"


def read_table(path: str | Path) -> DailyStateTable:
    path = Path(path)
    date = dt.date.fromisoformat(path.stem)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return DailyStateTable.empty(date)
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = list(reader)
    if not rows:
        return DailyStateTable.empty(date)
    cols = list(zip(*rows))
    data = {"norad_id": np.array(cols[0], dtype=np.int64),
            "epoch": np.array([c.rstrip("Z") for c in cols[1]], dtype="datetime64[us]")}
    for k, name in enumerate(COLUMNS[2:], start=2):
        data[name] = np.array(cols[k], dtype=float)
    return DailyStateTable(date=date, **data)


def available_dates(directory: str | Path) -> list[dt.date]:
    directory = Path(directory)
    if not directory.is_dir():
        return []
    dates = []
    for p in directory.glob("*.csv"):
        try:
            dates.append(dt.date.fromisoformat(p.stem))
        except ValueError:
            continue
    return sorted(dates)


def load_range(
    directory: str | Path, start: dt.date | None = None, end: dt.date | None = None
) -> Iterator[DailyStateTable]:
    for date in available_dates(directory):
        if (start is None or date >= start) and (end is None or date <= end):
            yield read_table(Path(directory) / f"{date.isoformat()}.csv")


def date_range(start: dt.date, end: dt.date) -> list[dt.date]:
    return [start + dt.timedelta(days=k) for k in range((end - start).days + 1)]
