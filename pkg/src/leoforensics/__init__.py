"""Constellation forensics for LEO mega-constellations from public element catalogs."""

from .config import RunConfig, Thresholds, load_config
from .ingest import ConjunctionEvent, SatCatEntry, TleRecord, parse_conjunctions, parse_satcat, parse_tle
from .store import DailyStateTable, read_table, write_table

__version__ = "0.1.0"

__all__ = [
    "ConjunctionEvent",
    "DailyStateTable",
    "RunConfig",
    "SatCatEntry",
    "Thresholds",
    "TleRecord",
    "load_config",
    "parse_conjunctions",
    "parse_satcat",
    "parse_tle",
    "read_table",
    "write_table",
    "__version__",
]
