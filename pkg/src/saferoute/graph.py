"""Subway network as a directed graph weighted by safety x travel time."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import DataError, UnknownStationError

STATION_COLUMNS = ("station", "train", "prev_stop", "next_stop", "time_min")
SAFETY_MODES = ("destination", "source", "mean")
DEFAULT_SAFETY = 1.0


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    lines: frozenset = frozenset()
    lat: Optional[float] = None
    lon: Optional[float] = None

    def __post_init__(self):
        if not self.id:
            raise DataError("station id must be non-empty")
        if self.lat is not None and not -90.0 <= self.lat <= 90.0:
            raise DataError(f"station {self.id!r}: latitude {self.lat} out of range")
        if self.lon is not None and not -180.0 <= self.lon <= 180.0:
            raise DataError(f"station {self.id!r}: longitude {self.lon} out of range")

    @property
    def has_coords(self) -> bool:
        return self.lat is not None and self.lon is not None


@dataclass(frozen=True)
class TrackSegment:
    source: str
    target: str
    travel_time: float

    def __post_init__(self):
        if self.source == self.target:
            raise DataError(f"segment {self.source!r} -> itself is not allowed")
        if not self.travel_time > 0:
            raise DataError(f"segment {self.source!r} -> {self.target!r}: travel time must be > 0")


@dataclass(frozen=True)
class StationRecord:
    """One row of the station connectivity CSV, times still unvalidated."""

    station: str
    train: str = ""
    prev_stop: str = ""
    next_stop: str = ""
    time_min: object = None
    lat: Optional[float] = None
    lon: Optional[float] = None
    row: int = 0


def edge_weight(s: float, t: float) -> float:
    """Combined cost of riding ``t`` minutes into a station of safety ``s``."""
    if not s >= 0:
        raise ValueError(f"safety coefficient must be >= 0, got {s}")
    if not t > 0:
        raise ValueError(f"travel time must be > 0, got {t}")
    return s * t


@dataclass(frozen=True)
class RouteGraph:
    """Read-only transit graph.

    ``segments`` maps each station id to its outgoing segments sorted by
    target id. Edge weights are computed on demand from ``safety`` so the
    same topology can be re-weighted with :meth:`with_safety`.
    """

    stations: Mapping[str, Station]
    segments: Mapping[str, tuple]
    safety: Mapping[str, float] = field(default_factory=dict)
    safety_mode: str = "destination"

    def __post_init__(self):
        if self.safety_mode not in SAFETY_MODES:
            raise ValueError(f"safety_mode must be one of {SAFETY_MODES}, got {self.safety_mode!r}")
        for sid, value in self.safety.items():
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"safety coefficient for {sid!r} must be finite and >= 0, got {value}")
        for segs in self.segments.values():
            for seg in segs:
                if seg.source not in self.stations or seg.target not in self.stations:
                    raise DataError(f"segment {seg.source!r} -> {seg.target!r} has an unknown endpoint")

    def __len__(self):
        return len(self.stations)

    def node_ids(self) -> list:
        return sorted(self.stations)

    @property
    def n_segments(self) -> int:
        return sum(len(v) for v in self.segments.values())

    def safety_of(self, station_id: str) -> float:
        return self.safety.get(station_id, DEFAULT_SAFETY)

    def segment_safety(self, u: str, v: str) -> float:
        if self.safety_mode == "destination":
            return self.safety_of(v)
        if self.safety_mode == "source":
            return self.safety_of(u)
        return 0.5 * (self.safety_of(u) + self.safety_of(v))

    def require(self, station_id: str) -> Station:
        try:
            return self.stations[station_id]
        except KeyError:
            raise UnknownStationError(station_id, close_matches(station_id, self.stations)) from None

    def neighbors(self, station_id: str) -> list:
        self.require(station_id)
        return [
            (seg.target, edge_weight(self.segment_safety(station_id, seg.target), seg.travel_time))
            for seg in self.segments.get(station_id, ())
        ]

    def travel_time(self, u: str, v: str) -> float:
        for seg in self.segments.get(u, ()):
            if seg.target == v:
                return seg.travel_time
        raise KeyError(f"no segment {u!r} -> {v!r}")

    def weight(self, u: str, v: str) -> float:
        return edge_weight(self.segment_safety(u, v), self.travel_time(u, v))

    def with_safety(self, safety: Mapping[str, float], mode: Optional[str] = None) -> "RouteGraph":
        return RouteGraph(self.stations, self.segments, dict(safety), mode or self.safety_mode)


def neighbors(graph, station_id: str) -> list:
    """Outgoing ``(neighbor id, weight)`` pairs sorted by neighbor id."""
    return graph.neighbors(station_id)


def close_matches(name: str, candidates: Iterable[str], n: int = 3) -> list:
    import difflib

    pool = list(candidates)
    hits = difflib.get_close_matches(name, pool, n=n, cutoff=0.5)
    if not hits:
        low = name.lower()
        hits = [c for c in sorted(pool) if low and (low in c.lower() or c.lower() in low)][:n]
    return hits


def _parse_time(value, row: int) -> float:
    try:
        t = float(value)
    except (TypeError, ValueError):
        raise DataError(f"row {row}: travel time {value!r} is not a number") from None
    if not (t > 0 and math.isfinite(t)):
        raise DataError(f"row {row}: travel time must be > 0, got {value!r}")
    return t


def build_graph(records: Iterable[StationRecord], safety: Optional[Mapping[str, float]] = None,
                safety_mode: str = "destination") -> RouteGraph:
    """Build a :class:`RouteGraph` from parsed station rows.

    Every (station, prev_stop) and (station, next_stop) pair becomes a segment
    in both directions carrying the row's travel time. Parallel connections
    collapse to the smallest time, so repeated rows are harmless.

    Raises:
        DataError: on a non-positive or non-numeric time (naming the row), or
            when a prev/next stop never appears as a station of its own.
    """
    lines: dict = {}
    coords: dict = {}
    best: dict = {}
    referenced: dict = {}

    for rec in records:
        name = (rec.station or "").strip()
        if not name:
            raise DataError(f"row {rec.row}: empty station name")
        lines.setdefault(name, set())
        if rec.train:
            lines[name].add(rec.train.strip())
        if rec.lat is not None and rec.lon is not None:
            coords.setdefault(name, (float(rec.lat), float(rec.lon)))
        stops = [s.strip() for s in (rec.prev_stop, rec.next_stop) if s and s.strip()]
        if not stops:
            continue
        t = _parse_time(rec.time_min, rec.row)
        for other in stops:
            if other == name:
                raise DataError(f"row {rec.row}: station {name!r} lists itself as a neighbour")
            referenced.setdefault(other, rec.row)
            for u, v in ((name, other), (other, name)):
                if t < best.get((u, v), math.inf):
                    best[(u, v)] = t

    dangling = sorted(set(referenced) - set(lines))
    if dangling:
        raise DataError("stops referenced but never defined as stations: " + ", ".join(dangling))

    stations = {}
    for name, ls in lines.items():
        lat, lon = coords.get(name, (None, None))
        stations[name] = Station(id=name, name=name, lines=frozenset(ls), lat=lat, lon=lon)
    adj: dict = {name: [] for name in stations}
    for (u, v), t in best.items():
        adj[u].append(TrackSegment(u, v, t))
    segments = {u: tuple(sorted(segs, key=lambda s: s.target)) for u, segs in adj.items()}
    return RouteGraph(stations, segments, dict(safety or {}), safety_mode)


def parse_station_csv(text: str) -> list:
    """Parse the connectivity CSV into :class:`StationRecord` rows.

    Optional ``lat``/``lon`` columns carry station coordinates.
    """
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in STATION_COLUMNS if c not in header]
    if missing:
        raise DataError("station file is missing column(s): " + ", ".join(missing))
    reader.fieldnames = header
    out = []
    for i, row in enumerate(reader, start=2):
        lat = _opt_float(row.get("lat"), i, "lat")
        lon = _opt_float(row.get("lon"), i, "lon")
        out.append(StationRecord(
            station=(row["station"] or "").strip(),
            train=(row["train"] or "").strip(),
            prev_stop=(row["prev_stop"] or "").strip(),
            next_stop=(row["next_stop"] or "").strip(),
            time_min=(row["time_min"] or "").strip(),
            lat=lat,
            lon=lon,
            row=i,
        ))
    return out


def _opt_float(value, row, col):
    if value is None or not str(value).strip():
        return None
    try:
        return float(value)
    except ValueError:
        raise DataError(f"row {row}: {col} {value!r} is not a number") from None


def load_station_file(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_station_csv(fh.read())


class WeightedDigraph:
    """Plain directed graph with explicit (possibly negative) edge weights.

    Shares the ``node_ids``/``neighbors`` surface of :class:`RouteGraph` so the
    routing engines accept either.
    """

    def __init__(self, nodes: Iterable[str] = (), edges: Iterable[tuple] = ()):
        self._adj: dict = {str(n): {} for n in nodes}
        for u, v, w in edges:
            u, v, w = str(u), str(v), float(w)
            self._adj.setdefault(u, {})
            self._adj.setdefault(v, {})
            if w < self._adj[u].get(v, math.inf):
                self._adj[u][v] = w

    def __len__(self):
        return len(self._adj)

    def node_ids(self) -> list:
        return sorted(self._adj)

    def require(self, node: str):
        if node not in self._adj:
            raise UnknownStationError(node, close_matches(node, self._adj))
        return node

    def neighbors(self, node: str) -> list:
        self.require(node)
        return sorted(self._adj[node].items())

    def weight(self, u: str, v: str) -> float:
        return self._adj[u][v]

    def edges(self) -> list:
        return [(u, v, w) for u in self.node_ids() for v, w in self.neighbors(u)]

    @classmethod
    def from_json(cls, text: str) -> "WeightedDigraph":
        """Read ``{"nodes": [...], "edges": [[u, v, w], ...]}``."""
        try:
            doc = json.loads(text)
            return cls(doc.get("nodes", ()), [tuple(e) for e in doc["edges"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad graph document: {exc}") from None

    def to_json(self) -> str:
        return json.dumps({"nodes": self.node_ids(), "edges": [list(e) for e in self.edges()]})
