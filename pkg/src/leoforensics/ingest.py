"""Catalog parsers (TLE, SatCat, conjunction reports) and daily-state materialization."""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

from . import orbital
from .store import DailyStateTable, parse_timestamp, reference_instant

log = logging.getLogger(__name__)

TLE_LINE_LENGTH = 69
_ALPHA5 = "ABCDEFGHJKLMNPQRSTUVWXYZ"  # I and O are skipped


@dataclass(frozen=True)
class Diagnostic:
    line: int
    reason: str
    detail: str = ""
    rejected: bool = True


@dataclass(frozen=True)
class ParseResult:
    records: list
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class TleRecord:
    norad_id: int
    intl_designator: str
    epoch: dt.datetime
    inclination: float
    raan: float
    eccentricity: float
    arg_perigee: float
    mean_anomaly: float
    mean_motion: float
    bstar: float
    line1_checksum: int
    line2_checksum: int
    classification: str = "U"
    mean_motion_dot: float = 0.0
    mean_motion_ddot: float = 0.0
    ephemeris_type: int = 0
    element_set_no: int = 999
    rev_number: int = 0
    name: str | None = None

    @property
    def in_leo_range(self) -> bool:
        return 10.0 < self.mean_motion < 17.0


@dataclass(frozen=True)
class SatCatEntry:
    norad_id: int
    object_name: str
    launch_date: dt.date
    decay_date: dt.date | None = None

    @property
    def lifetime_days(self) -> int | None:
        return None if self.decay_date is None else (self.decay_date - self.launch_date).days


@dataclass(frozen=True)
class ConjunctionEvent:
    sat1_id: int
    sat2_id: int
    tca: dt.datetime
    max_probability: float
    miss_distance: float


class TleFormatError(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


# ---------------------------------------------------------------- TLE format

def checksum(line: str) -> int:
    """Modulo-10 sum of the digits in the first 68 columns, '-' counting as 1."""
    total = 0
    for ch in line[:68]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


def _decode_satnum(text: str) -> int:
    text = text.strip()
    if not text:
        raise TleFormatError("non-numeric", "empty catalog number")
    if text[0].isalpha():
        if text[0] not in _ALPHA5 or not text[1:].isdigit():
            raise TleFormatError("non-numeric", f"catalog number {text!r}")
        return (_ALPHA5.index(text[0]) + 10) * 10000 + int(text[1:])
    if not text.isdigit():
        raise TleFormatError("non-numeric", f"catalog number {text!r}")
    return int(text)


def _encode_satnum(norad_id: int) -> str:
    if norad_id < 100000:
        return f"{norad_id:05d}"
    head, tail = divmod(norad_id, 10000)
    return f"{_ALPHA5[head - 10]}{tail:04d}"


def _float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise TleFormatError("non-numeric", f"{what} {text!r}") from None


def _implied_decimal(text: str, what: str) -> float:
    """Decode the ' 12345-4' style fields (implied leading decimal point, exponent)."""
    s = text.strip()
    if not s:
        return 0.0
    sign = -1.0 if s[0] == "-" else 1.0
    s = s.lstrip("+-")
    if len(s) < 2 or s[-2] not in "+-":
        raise TleFormatError("non-numeric", f"{what} {text!r}")
    mantissa, exponent = s[:-2], s[-2:]
    if not mantissa.isdigit() or not exponent[1].isdigit():
        raise TleFormatError("non-numeric", f"{what} {text!r}")
    return sign * float(f"0.{mantissa}") * 10.0 ** int(exponent)


def _format_implied(value: float) -> str:
    if value == 0.0:
        return " 00000-0"
    sign = "-" if value < 0 else " "
    mag = abs(value)
    exponent = math.floor(math.log10(mag)) + 1
    mantissa = round(mag / 10.0**exponent * 1e5)
    if mantissa >= 100000:
        mantissa //= 10
        exponent += 1
    if exponent < -9:
        return " 00000-0"  # below the field's resolution
    if exponent > 9:
        raise ValueError(f"{value} does not fit an implied-decimal field")
    exp_sign = "-" if exponent < 0 else "+"
    return f"{sign}{mantissa:05d}{exp_sign}{abs(exponent)}"


def _epoch_from_fields(year2: int, day: float) -> dt.datetime:
    year = 1900 + year2 if year2 >= 57 else 2000 + year2
    start = dt.datetime(year, 1, 1, tzinfo=dt.timezone.utc)
    return start + dt.timedelta(microseconds=round((day - 1.0) * 86400e6))


def _epoch_fields(epoch: dt.datetime) -> tuple[int, float]:
    start = dt.datetime(epoch.year, 1, 1, tzinfo=dt.timezone.utc)
    day = 1.0 + (epoch - start) / dt.timedelta(days=1)
    return epoch.year % 100, day


def parse_tle_lines(line1: str, line2: str, name: str | None = None) -> TleRecord:
    """Parse one element set; raises :class:`TleFormatError` with a reason code."""
    for num, line in (("1", line1), ("2", line2)):
        if len(line) < TLE_LINE_LENGTH:
            raise TleFormatError("truncated", f"line {num} has {len(line)} columns")
        if len(line) > TLE_LINE_LENGTH:
            raise TleFormatError("overlong", f"line {num} has {len(line)} columns")
        if line[0] != num:
            raise TleFormatError("line-number", f"expected line {num}")
        if not line[68].isdigit():
            raise TleFormatError("non-numeric", f"line {num} checksum {line[68]!r}")
        if checksum(line) != int(line[68]):
            raise TleFormatError("checksum", f"line {num}: expected {checksum(line)}, found {line[68]}")

    norad1 = _decode_satnum(line1[2:7])
    norad2 = _decode_satnum(line2[2:7])
    if norad1 != norad2:
        raise TleFormatError("mismatch", f"catalog numbers {norad1} and {norad2}")

    year2 = line1[18:20]
    if not year2.strip().isdigit():
        raise TleFormatError("non-numeric", f"epoch year {year2!r}")
    epoch = _epoch_from_fields(int(year2), _float(line1[20:32], "epoch day"))
    ndot = _float(line1[33:43], "mean motion derivative")
    nddot = _implied_decimal(line1[44:52], "second derivative")
    bstar = _implied_decimal(line1[53:61], "bstar")
    eph = line1[62].strip() or "0"
    elset = line1[64:68].strip() or "0"
    if not eph.isdigit() or not elset.isdigit():
        raise TleFormatError("non-numeric", "ephemeris type / element set number")

    inclination = _float(line2[8:16], "inclination")
    raan = _float(line2[17:25], "raan")
    ecc_text = line2[26:33].strip()
    if not ecc_text.isdigit():
        raise TleFormatError("non-numeric", f"eccentricity {ecc_text!r}")
    eccentricity = float(f"0.{ecc_text}")
    arg_perigee = _float(line2[34:42], "argument of perigee")
    mean_anomaly = _float(line2[43:51], "mean anomaly")
    mean_motion = _float(line2[52:63], "mean motion")
    rev_text = line2[63:68].strip() or "0"
    if not rev_text.isdigit():
        raise TleFormatError("non-numeric", f"revolution number {rev_text!r}")
    if mean_motion <= 0:
        raise TleFormatError("range", "mean motion must be positive")

    return TleRecord(
        norad_id=norad1,
        intl_designator=line1[9:17].strip(),
        epoch=epoch,
        inclination=inclination,
        raan=raan,
        eccentricity=eccentricity,
        arg_perigee=arg_perigee,
        mean_anomaly=mean_anomaly,
        mean_motion=mean_motion,
        bstar=bstar,
        line1_checksum=int(line1[68]),
        line2_checksum=int(line2[68]),
        classification=line1[7],
        mean_motion_dot=ndot,
        mean_motion_ddot=nddot,
        ephemeris_type=int(eph),
        element_set_no=int(elset),
        rev_number=int(rev_text),
        name=name,
    )


def format_tle(record: TleRecord) -> tuple[str, str]:
    """Render a record as two 69-column lines with fresh checksums."""
    year2, day = _epoch_fields(record.epoch)
    ndot = f"{record.mean_motion_dot:.8f}"
    ndot = ndot.replace("0.", ".", 1) if abs(record.mean_motion_dot) < 1 else ndot
    if not ndot.startswith("-"):
        ndot = " " + ndot
    satnum = _encode_satnum(record.norad_id)
    body1 = (
        f"1 {satnum}{record.classification} {record.intl_designator:<8} "
        f"{year2:02d}{day:012.8f} {ndot:>10} {_format_implied(record.mean_motion_ddot)} "
        f"{_format_implied(record.bstar)} {record.ephemeris_type:1d} {record.element_set_no % 10000:4d}"
    )
    ecc = f"{record.eccentricity:.7f}"[2:]
    body2 = (
        f"2 {satnum} {record.inclination:8.4f} {record.raan:8.4f} {ecc} "
        f"{record.arg_perigee:8.4f} {record.mean_anomaly:8.4f} {record.mean_motion:11.8f}"
        f"{record.rev_number % 100000:5d}"
    )
    return body1 + str(checksum(body1)), body2 + str(checksum(body2))


def parse_tle(stream: IO[str] | Iterable[str]) -> ParseResult:
    """Parse 2-line or 3-line element sets; bad sets are skipped with diagnostics."""
    records: list[TleRecord] = []
    diagnostics: list[Diagnostic] = []
    name: str | None = None
    pending: tuple[int, str] | None = None

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n").rstrip()
        if not line:
            continue
        if line.startswith("1 "):
            if pending is not None:
                diagnostics.append(Diagnostic(pending[0], "truncated", "line 1 without line 2"))
            pending = (lineno, line)
            continue
        if line.startswith("2 "):
            if pending is None:
                diagnostics.append(Diagnostic(lineno, "truncated", "line 2 without line 1"))
                name = None
                continue
            start, line1 = pending
            pending = None
            try:
                record = parse_tle_lines(line1, line, name)
            except TleFormatError as exc:
                diagnostics.append(Diagnostic(start, exc.reason, exc.detail))
            else:
                if not record.in_leo_range:
                    diagnostics.append(
                        Diagnostic(start, "mean-motion-range", f"{record.mean_motion} rev/day", rejected=False)
                    )
                records.append(record)
            name = None
            continue
        if pending is not None:
            diagnostics.append(Diagnostic(pending[0], "truncated", "line 1 without line 2"))
            pending = None
        name = line[2:].strip() if line.startswith("0 ") else line.strip()

    if pending is not None:
        diagnostics.append(Diagnostic(pending[0], "truncated", "line 1 without line 2"))
    return ParseResult(records, diagnostics)


# ---------------------------------------------------------------- delimited tables

SATCAT_COLUMNS = {
    "norad_id": ("NORAD_CAT_ID", "norad_id", "NORAD"),
    "object_name": ("OBJECT_NAME", "SATNAME", "object_name", "name"),
    "launch": ("LAUNCH_DATE", "LAUNCH", "launch_date", "launch"),
    "decay": ("DECAY_DATE", "DECAY", "decay_date", "decay"),
}

CONJUNCTION_COLUMNS = {
    "sat1_id": ("NORAD_CAT_ID_1", "sat1_id"),
    "sat2_id": ("NORAD_CAT_ID_2", "sat2_id"),
    "tca": ("TCA", "tca"),
    "max_probability": ("MAX_PROB", "max_probability"),
    "miss_distance": ("TCA_RANGE", "MIN_RNG", "miss_distance"),
}


def _resolve_columns(header: Sequence[str], spec: dict[str, tuple[str, ...]],
                     overrides: dict[str, str] | None) -> dict[str, str]:
    resolved = {}
    for key, aliases in spec.items():
        candidates = (overrides[key],) if overrides and key in overrides else aliases
        match = next((c for c in candidates if c in header), None)
        if match is None:
            raise KeyError(f"no column for {key!r}; looked for {', '.join(candidates)}")
        resolved[key] = match
    return resolved


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip()[:10])


def parse_satcat(stream: IO[str] | Iterable[str], columns: dict[str, str] | None = None,
                 delimiter: str = ",") -> ParseResult:
    reader = csv.DictReader(stream, delimiter=delimiter)
    if reader.fieldnames is None:
        return ParseResult([], [])
    cols = _resolve_columns(reader.fieldnames, SATCAT_COLUMNS, columns)
    entries, diagnostics = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            norad = int(row[cols["norad_id"]])
            launch = _parse_date(row[cols["launch"]])
            decay_text = (row[cols["decay"]] or "").strip()
            decay = _parse_date(decay_text) if decay_text else None
        except (ValueError, TypeError) as exc:
            diagnostics.append(Diagnostic(lineno, "non-numeric", str(exc)))
            continue
        if decay is not None and decay < launch:
            diagnostics.append(Diagnostic(lineno, "decay-before-launch", f"{norad}: {decay} < {launch}"))
            continue
        entries.append(SatCatEntry(norad, (row[cols["object_name"]] or "").strip(), launch, decay))
    return ParseResult(entries, diagnostics)


def parse_conjunctions(stream: IO[str] | Iterable[str], columns: dict[str, str] | None = None,
                       delimiter: str = ",") -> ParseResult:
    reader = csv.DictReader(stream, delimiter=delimiter)
    if reader.fieldnames is None:
        return ParseResult([], [])
    cols = _resolve_columns(reader.fieldnames, CONJUNCTION_COLUMNS, columns)
    events, diagnostics = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            sat1 = int(row[cols["sat1_id"]])
            sat2 = int(row[cols["sat2_id"]])
            tca = parse_timestamp(row[cols["tca"]])
            prob = float(row[cols["max_probability"]])
            miss = float(row[cols["miss_distance"]])
        except (ValueError, TypeError) as exc:
            diagnostics.append(Diagnostic(lineno, "non-numeric", str(exc)))
            continue
        if not 0.0 <= prob <= 1.0:
            diagnostics.append(Diagnostic(lineno, "probability-range", f"{prob}"))
            continue
        if sat1 == sat2:
            diagnostics.append(Diagnostic(lineno, "self-conjunction", f"{sat1}"))
            continue
        if miss < 0:
            diagnostics.append(Diagnostic(lineno, "miss-distance-range", f"{miss}"))
            continue
        events.append(ConjunctionEvent(sat1, sat2, tca, prob, miss))
    events.sort(key=lambda e: (e.tca, e.sat1_id, e.sat2_id))
    return ParseResult(events, diagnostics)


# ---------------------------------------------------------------- daily states

@dataclass
class BuildReport:
    propagation_failures: int = 0
    failures: list[tuple[dt.date, int, str]] = field(default_factory=list)


def _record_key(r: TleRecord):
    return (r.epoch, r.element_set_no, r.rev_number, r.mean_motion, r.inclination, r.raan,
            r.eccentricity, r.arg_perigee, r.mean_anomaly, r.bstar)


def nearest_record(records: Sequence[TleRecord], epochs: Sequence[dt.datetime], t: dt.datetime,
                   window: dt.timedelta) -> TleRecord | None:
    """Record whose epoch is nearest to ``t`` within ``window``; ties go to the earlier epoch."""
    k = bisect.bisect_left(epochs, t)
    best = None
    for j in (k - 1, k):
        if 0 <= j < len(records):
            gap = abs(epochs[j] - t)
            if gap <= window and (best is None or gap < best[0]):
                best = (gap, records[j])
    return None if best is None else best[1]


def build_daily_states(
    records: Iterable[TleRecord],
    start: dt.date,
    end: dt.date,
    fallback_window_h: float = 72.0,
    propagator=orbital.propagate,
    report: BuildReport | None = None,
) -> list[DailyStateTable]:
    """One :class:`DailyStateTable` per date in [start, end], states at 12:00 UTC."""
    if fallback_window_h <= 0:
        raise ValueError("fallback window must be positive")
    window = dt.timedelta(hours=fallback_window_h)
    by_sat: dict[int, list[TleRecord]] = defaultdict(list)
    for r in records:
        by_sat[r.norad_id].append(r)
    series = {}
    for norad, recs in by_sat.items():
        recs.sort(key=_record_key)
        deduped: list[TleRecord] = []
        for r in recs:
            if deduped and deduped[-1].epoch == r.epoch:
                deduped[-1] = r
            else:
                deduped.append(r)
        series[norad] = (deduped, [r.epoch for r in deduped])

    report = report if report is not None else BuildReport()
    tables = []
    day = start
    while day <= end:
        t = reference_instant(day)
        rows = []
        for norad in sorted(series):
            recs, epochs = series[norad]
            rec = nearest_record(recs, epochs, t, window)
            if rec is None:
                continue
            try:
                state = propagator(rec, t)
            except orbital.PropagationError as exc:
                report.propagation_failures += 1
                report.failures.append((day, norad, str(exc)))
                continue
            rows.append((rec.epoch, state))
        tables.append(DailyStateTable.from_states(day, rows))
        day += dt.timedelta(days=1)
    if report.propagation_failures:
        log.warning("%d propagation failures omitted", report.propagation_failures)
    return tables


def iter_tle_files(paths: Iterable) -> Iterator[ParseResult]:
    for path in paths:
        with open(path, encoding="utf-8", errors="replace") as fh:
            yield parse_tle(fh)
