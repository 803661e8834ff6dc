"""Ground visibility, +grid and partial-grid topologies, routing metrics and link churn."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra, shortest_path
from sgp4.propagation import gstime

from . import orbital
from .shells import PlaneAssignment
from .store import DailyStateTable, reference_instant


class EdgeKind(str, enum.Enum):
    INTRA_PLANE = "INTRA_PLANE"
    INTER_PLANE = "INTER_PLANE"
    GROUND = "GROUND"


class NoRouteError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroundPoint:
    latitude: float
    longitude: float
    label: str | None = None

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        lon = (self.longitude + 180.0) % 360.0 - 180.0
        object.__setattr__(self, "longitude", lon)


@dataclass(frozen=True, eq=False)
class TopologyGraph:
    """Satellite graph; ``edges`` holds node-index pairs (i < j)."""

    node_ids: np.ndarray
    positions: np.ndarray
    edges: np.ndarray
    kinds: tuple[EdgeKind, ...]
    t: dt.datetime | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loop in topology")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "node_ids", np.asarray(self.node_ids, dtype=np.int64))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 3))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def length_km(self) -> np.ndarray:
        p = self.positions
        return np.linalg.norm(p[self.edges[:, 0]] - p[self.edges[:, 1]], axis=1)

    @property
    def delay_ms(self) -> np.ndarray:
        return self.length_km / orbital.SPEED_OF_LIGHT_KM_S * 1000.0

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def edge_set(self) -> frozenset[tuple[int, int]]:
        ids = self.node_ids
        return frozenset(tuple(sorted((int(ids[i]), int(ids[j])))) for i, j in self.edges)

    def matrix(self, weighted: bool = True):
        w = self.delay_ms if weighted else np.ones(len(self.edges))
        n = self.n_nodes
        return coo_matrix((w, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n)).tocsr()


@dataclass(frozen=True)
class VisibilityGrid:
    counts: np.ndarray
    t: dt.datetime | None
    min_elevation: float

    @staticmethod
    def latitudes() -> np.ndarray:
        return np.arange(180) - 89.5

    @staticmethod
    def longitudes() -> np.ndarray:
        return np.arange(360) - 179.5

    def at(self, latitude: float, longitude: float) -> int:
        i = min(int(np.floor(latitude + 90.0)), 179)
        j = int(np.floor((longitude + 180.0) % 360.0))
        return int(self.counts[i, j])


@dataclass(frozen=True)
class RouteMetrics:
    avg_delay_ms: float
    avg_hops: float
    n_nodes: int
    n_components: int

    @property
    def connected(self) -> bool:
        return self.n_components == 1


@dataclass(frozen=True)
class GroundRoute:
    delay_ms: float
    satellites: int
    path: tuple[int, ...]


@dataclass(frozen=True)
class ChurnDay:
    date0: dt.date
    date1: dt.date
    links: int
    missing_satellite: int
    repositioned: int

    @property
    def failed(self) -> int:
        return self.missing_satellite + self.repositioned

    @property
    def rate(self) -> float:
        return self.failed / self.links if self.links else 0.0


@dataclass(frozen=True)
class ChurnReport:
    days: tuple[ChurnDay, ...]

    def mean_failures(self) -> float:
        return float(np.mean([d.failed for d in self.days])) if self.days else 0.0

    def mean_rate(self) -> float:
        return float(np.mean([d.rate for d in self.days])) if self.days else 0.0

    def attribution(self) -> dict[str, float]:
        failed = sum(d.failed for d in self.days)
        if not failed:
            return {"MISSING_SATELLITE": 0.0, "REPOSITIONED": 0.0}
        return {
            "MISSING_SATELLITE": sum(d.missing_satellite for d in self.days) / failed,
            "REPOSITIONED": sum(d.repositioned for d in self.days) / failed,
        }


# ---------------------------------------------------------------- geometry

def gmst(t: dt.datetime) -> float:
    """Greenwich mean sidereal angle in radians (UT1 taken as UTC)."""
    jd, fr = orbital.julian_date(t)
    return float(gstime(jd + fr))


def ground_position(point: GroundPoint, t: dt.datetime | None = None) -> np.ndarray:
    """Inertial position (km) of a ground point on a spherical Earth; Earth-fixed if t is None."""
    lat = np.radians(point.latitude)
    lon = np.radians(point.longitude) + (gmst(t) if t is not None else 0.0)
    return orbital.R_EARTH_KM * np.array([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def elevation_deg(ground: np.ndarray, sats: np.ndarray) -> np.ndarray:
    """Elevation of each satellite above the local horizon of a ground position."""
    d = np.asarray(sats, dtype=float).reshape(-1, 3) - ground
    up = ground / np.linalg.norm(ground)
    return np.degrees(np.arcsin(np.clip(d @ up / np.linalg.norm(d, axis=1), -1.0, 1.0)))


def footprint_angle(radius_km, min_elevation: float = 25.0):
    """Earth central angle (rad) within which a satellite at ``radius_km`` clears ``min_elevation``."""
    e = np.radians(min_elevation)
    ratio = np.clip(orbital.R_EARTH_KM * np.cos(e) / np.asarray(radius_km, dtype=float), -1.0, 1.0)
    return np.arccos(ratio) - e


def _to_earth_fixed(positions: np.ndarray, t: dt.datetime | None) -> np.ndarray:
    if t is None:
        return positions
    th = gmst(t)
    c, s = np.cos(th), np.sin(th)
    x, y, z = positions[:, 0], positions[:, 1], positions[:, 2]
    return np.column_stack([c * x + s * y, -s * x + c * y, z])


def visibility_grid(positions, t: dt.datetime | None, min_elevation: float = 25.0,
                    chunk: int = 512) -> VisibilityGrid:
    """Satellites above ``min_elevation`` at the centre of every 1x1 degree cell."""
    pos = _to_earth_fixed(np.asarray(positions, dtype=float).reshape(-1, 3), t)
    lat = np.radians(VisibilityGrid.latitudes())[:, None]
    lon = np.radians(VisibilityGrid.longitudes())[None, :]
    cells = np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat) + 0 * lon], axis=-1)
    cells = cells.reshape(-1, 3)
    counts = np.zeros(len(cells), dtype=np.int64)
    r = np.linalg.norm(pos, axis=1)
    cos_limit = np.cos(footprint_angle(r, min_elevation))
    for k in range(0, len(pos), chunk):
        unit = pos[k : k + chunk] / r[k : k + chunk, None]
        counts += (cells @ unit.T >= cos_limit[k : k + chunk]).sum(axis=1)
    return VisibilityGrid(counts.reshape(180, 360), t, min_elevation)


# ---------------------------------------------------------------- topologies

def walker_positions(planes: int, sats_per_plane: int, phasing: int, inclination: float, altitude: float,
                     raan0: float = 0.0, u0: float = 0.0):
    """Phases, RAANs and inertial positions of a circular Walker-Delta shell, slot-major by plane."""
    T = planes * sats_per_plane
    p = np.repeat(np.arange(planes), sats_per_plane)
    s = np.tile(np.arange(sats_per_plane), planes)
    u = np.mod(u0 + 360.0 * s / sats_per_plane + 360.0 * phasing * p / T, 360.0)
    raan = np.mod(raan0 + 360.0 * p / planes, 360.0)
    a = orbital.R_EARTH_KM + altitude
    pos = orbital.positions(np.full(T, a), np.zeros(T), inclination, raan, u, u)
    return u, raan, pos


def build_grid(planes: int, sats_per_plane: int, phasing: int = 0, inclination: float = 53.0,
               altitude: float = 550.0, node_ids: Sequence[int] | None = None,
               t: dt.datetime | None = None) -> TopologyGraph:
    """Ideal +grid: two intra-plane neighbours plus the nearest-phase satellite in each adjacent plane."""
    P, S = planes, sats_per_plane
    if P < 3 or S < 3:
        raise ValueError("a +grid needs at least 3 planes and 3 satellites per plane")
    _, _, pos = walker_positions(P, S, phasing, inclination, altitude)
    T = P * S
    shift = 360.0 * phasing / T
    edges, kinds = [], []
    for p in range(P):
        for s in range(S):
            edges.append((p * S + s, p * S + (s + 1) % S))
            kinds.append(EdgeKind.INTRA_PLANE)
        q = (p + 1) % P
        # phase of plane q relative to plane p, in slots
        offset = shift if q else -(P - 1) * shift
        k = _nearest_slot(offset, S)
        for s in range(S):
            edges.append((p * S + s, q * S + (s + k) % S))
            kinds.append(EdgeKind.INTER_PLANE)
    ids = np.arange(T) if node_ids is None else np.asarray(node_ids)
    edges = np.sort(np.array(edges), axis=1)
    return TopologyGraph(ids, pos, edges, tuple(kinds), t)


def _nearest_slot(offset_deg: float, S: int) -> int:
    """Slot shift k minimising |360 k / S + offset| on the circle (ties to the smaller |.|, then k)."""
    g = 360.0 / S
    best = min(range(S), key=lambda k: (abs((k * g + offset_deg + 180.0) % 360.0 - 180.0), k))
    return best


def _phase_order(u_from: float, u_to: np.ndarray, ids: np.ndarray) -> np.ndarray:
    diff = np.abs(np.mod(u_to - u_from + 180.0, 360.0) - 180.0)
    return np.lexsort((ids, diff))


def build_pgrid(states: DailyStateTable, planes: PlaneAssignment, t: dt.datetime | None = None) -> TopologyGraph:
    """Partial grid over a shell snapshot with detected planes.

    Intra-plane links join phase-adjacent satellites. Between adjacent
    populated planes (by RAAN, wrapping) each satellite nominates its
    nearest-phase satellite on the other side; nominations are accepted
    shortest first while both endpoints have that side free, and satellites
    left without a partner try their second-nearest once.
    """
    idx = states.index_of()
    members = []
    for p in range(planes.n_planes):
        rows = [idx[n] for n in planes.members(p) if n in idx]
        if rows:
            rows = np.array(rows)
            rows = rows[np.lexsort((states.norad_id[rows], states.u_deg[rows]))]
            members.append(rows)
    # empty planes are skipped, so adjacency runs between populated planes
    pos = states.positions
    u = states.u_deg
    ids = states.norad_id
    edges: list[tuple[int, int]] = []
    kinds: list[EdgeKind] = []

    for rows in members:
        n = len(rows)
        count = n if n >= 3 else n - 1
        for k in range(max(count, 0)):
            edges.append((rows[k], rows[(k + 1) % n]))
            kinds.append(EdgeKind.INTRA_PLANE)

    K = len(members)
    pairs = [(k, (k + 1) % K) for k in range(K)] if K >= 3 else ([(0, 1)] if K == 2 else [])
    for lo, hi in pairs:
        for a, b in _match_planes(members[lo], members[hi], u, ids, pos):
            edges.append((a, b))
            kinds.append(EdgeKind.INTER_PLANE)

    used = sorted({r for e in edges for r in e} | {r for rows in members for r in rows.tolist()})
    remap = {r: i for i, r in enumerate(used)}
    arr = np.array([(remap[a], remap[b]) for a, b in edges], dtype=np.int64).reshape(-1, 2)
    arr = np.sort(arr, axis=1)
    used = np.array(used, dtype=np.int64)
    return TopologyGraph(ids[used], pos[used], arr, tuple(kinds), t if t is not None else states.instant)


def _match_planes(A: np.ndarray, B: np.ndarray, u, ids, pos) -> list[tuple[int, int]]:
    def length(a, b):
        return float(np.linalg.norm(pos[a] - pos[b]))

    rank_a = {a: B[_phase_order(u[a], u[B], ids[B])] for a in A.tolist()}
    rank_b = {b: A[_phase_order(u[b], u[A], ids[A])] for b in B.tolist()}
    free_a, free_b = set(A.tolist()), set(B.tolist())
    links: list[tuple[int, int]] = []

    def accept(proposals):
        for _, a, b in sorted(proposals, key=lambda x: (x[0], ids[x[1]], ids[x[2]])):
            if a in free_a and b in free_b:
                free_a.discard(a)
                free_b.discard(b)
                links.append((a, b))

    first = {(a, int(r[0])) for a, r in rank_a.items() if len(r)}
    first |= {(int(r[0]), b) for b, r in rank_b.items() if len(r)}
    accept([(length(a, b), a, b) for a, b in first])

    second = []
    for a in sorted(free_a):
        r = rank_a[a]
        if len(r) > 1 and int(r[1]) in free_b:
            second.append((length(a, int(r[1])), a, int(r[1])))
    for b in sorted(free_b):
        r = rank_b[b]
        if len(r) > 1 and int(r[1]) in free_a:
            second.append((length(int(r[1]), b), int(r[1]), b))
    accept(second)
    return links


# ---------------------------------------------------------------- routing

def _largest_component(graph: TopologyGraph) -> tuple[np.ndarray, int]:
    n_comp, labels = connected_components(graph.matrix(False), directed=False)
    if n_comp <= 1:
        return np.arange(graph.n_nodes), max(n_comp, 1 if graph.n_nodes else 0)
    biggest = np.argmax(np.bincount(labels))
    return np.flatnonzero(labels == biggest), n_comp


def route_metrics(graph: TopologyGraph) -> RouteMetrics:
    """Mean shortest-path delay (delay-weighted) and hop count (unweighted) over unordered pairs.

    A disconnected graph is reduced to its largest component with a warning.
    """
    keep, n_comp = _largest_component(graph)
    if n_comp > 1:
        warnings.warn(f"topology has {n_comp} components; metrics over the largest ({len(keep)} nodes)",
                      RuntimeWarning, stacklevel=2)
    n = len(keep)
    if n < 2:
        return RouteMetrics(0.0, 0.0, n, n_comp)
    delay = shortest_path(graph.matrix(True)[keep][:, keep], method="D", directed=False)
    hops = shortest_path(graph.matrix(False)[keep][:, keep], method="D", directed=False, unweighted=True)
    iu = np.triu_indices(n, 1)
    return RouteMetrics(float(delay[iu].mean()), float(hops[iu].mean()), n, n_comp)


def ground_route(graph: TopologyGraph, src: GroundPoint, dst: GroundPoint,
                 min_elevation: float = 25.0) -> GroundRoute:
    """Delay-weighted shortest route between two ground points through the satellite graph."""
    ends = [ground_position(src, graph.t), ground_position(dst, graph.t)]
    n = graph.n_nodes
    rows, cols, w = list(graph.edges[:, 0]), list(graph.edges[:, 1]), list(graph.delay_ms)
    for k, g in enumerate(ends):
        visible = np.flatnonzero(elevation_deg(g, graph.positions) >= min_elevation) if n else np.empty(0, int)
        if len(visible) == 0:
            point = src if k == 0 else dst
            raise NoRouteError(f"no satellite visible from {point.label or (point.latitude, point.longitude)}")
        slant = np.linalg.norm(graph.positions[visible] - g, axis=1)
        rows += [n + k] * len(visible)
        cols += visible.tolist()
        w += (slant / orbital.SPEED_OF_LIGHT_KM_S * 1000.0).tolist()
    m = coo_matrix((w, (rows, cols)), shape=(n + 2, n + 2)).tocsr()
    dist, pred = dijkstra(m, directed=False, indices=n, return_predecessors=True)
    if not np.isfinite(dist[n + 1]):
        raise NoRouteError("ground endpoints are in different components")
    path = []
    k = pred[n + 1]
    while k != n:
        path.append(int(graph.node_ids[k]))
        k = pred[k]
    return GroundRoute(float(dist[n + 1]), len(path), tuple(reversed(path)))


def load_cities(path: str | Path | None = None) -> dict[str, GroundPoint]:
    if path is None:
        text = resources.files("leoforensics").joinpath("data/cities.csv").read_text()
    else:
        text = Path(path).read_text()
    out = {}
    for row in csv.DictReader(text.splitlines()):
        out[row["label"]] = GroundPoint(float(row["lat"]), float(row["lon"]), row["label"])
    return out


# ---------------------------------------------------------------- churn

def aligned_pair(day0: DailyStateTable, day1: DailyStateTable) -> tuple[DailyStateTable, DailyStateTable]:
    """Day1 advanced to the whole-period multiple of the shell period nearest to one day after day0's tick."""
    if len(day0) == 0:
        return day0, day1
    period = float(np.median(orbital.SECONDS_PER_DAY / day0.mean_motion_revday))
    t0 = reference_instant(day0.date)
    step = orbital.best_multiple(period, (reference_instant(day1.date) - t0).total_seconds()) * period
    return day0, day1.advanced_to(t0 + dt.timedelta(seconds=step))


def _restricted(planes: PlaneAssignment, allowed: Iterable[int] | None) -> PlaneAssignment:
    if allowed is None:
        return planes
    allowed = set(allowed)
    labels = {n: (p if n in allowed else None) for n, p in planes.labels.items()}
    return PlaneAssignment(planes.date, planes.shell, labels, planes.plane_raan_centers)


def link_churn(
    tables: Sequence[DailyStateTable],
    planes_by_date: Mapping[dt.date, PlaneAssignment],
    node_filter: Mapping[dt.date, Iterable[int]] | None = None,
) -> ChurnReport:
    """Day-over-day pGrid link failures with cause attribution.

    Both days of a pair are evaluated at phase-aligned instants. A failed link
    is MISSING_SATELLITE when either endpoint is not a node of the next day's
    graph, otherwise REPOSITIONED. ``node_filter`` optionally restricts each
    day's nodes (e.g. to regular satellites).
    """
    tables = sorted((t for t in tables if t.date in planes_by_date), key=lambda t: t.date)
    days = []
    for a, b in zip(tables, tables[1:]):
        if (b.date - a.date).days != 1:
            continue
        pa = _restricted(planes_by_date[a.date], None if node_filter is None else node_filter.get(a.date, ()))
        pb = _restricted(planes_by_date[b.date], None if node_filter is None else node_filter.get(b.date, ()))
        sa = a.select(n for n, p in pa.labels.items() if p is not None)
        sb = b.select(n for n, p in pb.labels.items() if p is not None)
        sa, sb = aligned_pair(sa, sb)
        ga, gb = build_pgrid(sa, pa), build_pgrid(sb, pb)
        before, after = ga.edge_set(), gb.edge_set()
        nodes_after = set(gb.node_ids.tolist())
        failed = before - after
        missing = sum(1 for x, y in failed if x not in nodes_after or y not in nodes_after)
        days.append(ChurnDay(a.date, b.date, len(before), missing, len(failed) - missing))
    return ChurnReport(tuple(days))
