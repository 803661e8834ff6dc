"""Named analysis thresholds and config-file loading.

Every threshold used by the analyses lives here with its default value, so a
run is fully described by one flat key/value mapping.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


@dataclass(frozen=True)
class Thresholds:
    # ingest
    fallback_window_h: float = 72.0
    leo_mean_motion_min: float = 10.0
    leo_mean_motion_max: float = 17.0
    # shells / planes
    shell_incl_threshold_deg: float = 0.1
    shell_alt_threshold_km: float = 10.0
    shell_min_samples: int = 25
    shell_altitude: str = "mean"  # "mean" | "apogee"
    plane_raan_radius_deg: float = 1.0
    min_plane_size: int = 3
    # intra-plane structure
    twin_threshold_deg: float = 5.0
    regular_tol_deg: float = 2.0
    spacing_bin_deg: float = 0.5
    spacing_refine_deg: float = 2.0
    walker_bin_deg: float = 0.25
    # lifecycle
    lifecycle_margin_km: float = 10.0
    baseline_window_start: int = 1
    baseline_window_end: int = 1000
    # movement
    movement_sigma: float = 5.0
    movement_scale: str = "std"  # "std" | "mad"
    movement_min_common: int = 25
    collision_probability_threshold: float = 3e-7
    conjunction_window_days: int = 1
    initial_positioning_days: int = 15
    # netsim
    min_elevation_deg: float = 25.0


@dataclass
class RunConfig:
    """Pipeline configuration: data locations, date range, shells and thresholds."""

    store: Path = Path("states")
    out: Path = Path("report")
    tle: list[Path] = field(default_factory=list)
    satcat: Path | None = None
    conjunctions: Path | None = None
    date_from: str | None = None
    date_to: str | None = None
    shells: list[str] = field(default_factory=list)
    topology_date: str | None = None
    grid_planes: int = 72
    grid_sats_per_plane: int = 22
    grid_phasing: int = 0
    visibility_dates: list[str] = field(default_factory=list)
    city_pairs: list[tuple[str, str]] = field(default_factory=list)
    generations: Path | None = None
    seed: int = 0
    thresholds: Thresholds = field(default_factory=Thresholds)


_PATH_KEYS = {"store", "out", "satcat", "conjunctions", "generations"}


def thresholds_from_mapping(values: dict[str, Any]) -> Thresholds:
    known = {f.name: f for f in dataclasses.fields(Thresholds)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise KeyError(f"unknown threshold keys: {', '.join(unknown)}")
    coerced = {}
    for key, value in values.items():
        default = getattr(Thresholds, key)
        coerced[key] = type(default)(value)
    return Thresholds(**coerced)


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML or JSON config file into a :class:`RunConfig`.

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    raw = dict(raw or {})
    base = path.parent

    thresholds = thresholds_from_mapping(raw.pop("thresholds", {}) or {})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise KeyError(f"unknown config keys: {', '.join(unknown)}")

    for key in _PATH_KEYS & set(raw):
        if raw[key] is not None:
            raw[key] = base / raw[key]
    if "tle" in raw:
        tle = raw["tle"]
        raw["tle"] = [base / p for p in ([tle] if isinstance(tle, str) else tle)]
    if "city_pairs" in raw:
        raw["city_pairs"] = [tuple(pair) for pair in raw["city_pairs"]]
    for key in ("date_from", "date_to", "topology_date"):
        if key in raw and raw[key] is not None:
            raw[key] = str(raw[key])
    if "visibility_dates" in raw:
        raw["visibility_dates"] = [str(d) for d in raw["visibility_dates"]]
    return RunConfig(thresholds=thresholds, **raw)
