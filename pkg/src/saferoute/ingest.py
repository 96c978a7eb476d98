"""Incident parsing, radius filtering, time bucketing and the holdout split."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DataError
from .kernels import EARTH_RADIUS_KM

logger = logging.getLogger(__name__)

INCIDENT_COLUMNS = ("occurred_at", "latitude", "longitude")
BUCKETS = ("monthly", "weekly", "daily")
TEST_SIZE = 5
MIN_TRAIN = 3
DEFAULT_RADIUS_KM = 8.0
DEFAULT_START = date(2018, 1, 1)
DEFAULT_END = date(2020, 1, 1)
SAFETY_FLOOR = 0.1


@dataclass(frozen=True)
class IncidentRecord:
    timestamp: datetime
    lat: float
    lon: float


@dataclass
class IncidentLog:
    """Parsed incident file: the good records plus a tally of skipped rows."""

    records: list = field(default_factory=list)
    malformed: int = 0
    malformed_rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def arrays(self):
        """Columns as numpy arrays: (lat, lon, timestamps as datetime64[s])."""
        lat = np.array([r.lat for r in self.records], dtype=float)
        lon = np.array([r.lon for r in self.records], dtype=float)
        ts = np.array([r.timestamp for r in self.records], dtype="datetime64[s]")
        return lat, lon, ts


def parse_incidents(text: str) -> IncidentLog:
    """Parse incident CSV text.

    Rows with an unparseable timestamp or out-of-range coordinates are
    skipped and counted in ``malformed``; a missing column is fatal.
    """
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    if not header:
        if text.strip():
            raise DataError("incident file has no header row")
        return IncidentLog()
    missing = [c for c in INCIDENT_COLUMNS if c not in header]
    if missing:
        raise DataError("incident file is missing column(s): " + ", ".join(missing))
    reader.fieldnames = header
    log = IncidentLog()
    for line, row in enumerate(reader, start=2):
        try:
            ts = datetime.fromisoformat((row["occurred_at"] or "").strip())
            lat = float(row["latitude"])
            lon = float(row["longitude"])
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise ValueError("coordinates out of range")
        except (TypeError, ValueError):
            log.malformed += 1
            log.malformed_rows.append(line)
            continue
        log.records.append(IncidentRecord(ts, lat, lon))
    if log.malformed:
        logger.warning("skipped %d malformed incident row(s)", log.malformed)
    return log


def load_incident_file(path) -> IncidentLog:
    with open(path, encoding="utf-8") as fh:
        return parse_incidents(fh.read())


def haversine_km(a: Sequence[float], b: Sequence[float]) -> float:
    """Great-circle distance in km between two (lat, lon) points in degrees."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


# --------------------------------------------------------------------------
# time buckets
# --------------------------------------------------------------------------

def _as_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


def bucket_starts(start, end, bucket: str = "monthly") -> list:
    """Start dates of the buckets tiling ``[start, end)``."""
    start, end = _as_date(start), _as_date(end)
    if bucket not in BUCKETS:
        raise ValueError(f"bucket must be one of {BUCKETS}, got {bucket!r}")
    if end <= start:
        raise DataError(f"empty date range [{start}, {end})")
    if bucket == "monthly":
        if start.day != 1 or end.day != 1:
            raise DataError("monthly buckets need a range starting and ending on the 1st of a month")
        n = (end.year - start.year) * 12 + end.month - start.month
        return [date(start.year + (start.month - 1 + k) // 12, (start.month - 1 + k) % 12 + 1, 1) for k in range(n)]
    stride = 7 if bucket == "weekly" else 1
    days = (end - start).days
    if days % stride:
        raise DataError(f"range of {days} days is not a whole number of {bucket} buckets")
    return [start + timedelta(days=k * stride) for k in range(days // stride)]


def bucket_index(timestamps: np.ndarray, start, end, bucket: str = "monthly") -> np.ndarray:
    """Bucket number for each timestamp; -1 for anything outside ``[start, end)``."""
    start, end = _as_date(start), _as_date(end)
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    inside = (ts >= np.datetime64(start, "s")) & (ts < np.datetime64(end, "s"))
    if bucket == "monthly":
        months = ts.astype("datetime64[M]").astype(np.int64)
        idx = months - np.datetime64(start, "M").astype(np.int64)
    else:
        days = (ts.astype("datetime64[D]") - np.datetime64(start, "D")).astype(np.int64)
        idx = days // (7 if bucket == "weekly" else 1)
    return np.where(inside, idx, -1).astype(np.int64)


# --------------------------------------------------------------------------
# series
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IncidentSeries:
    station_id: str
    bucket_start: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.counts) != len(self.bucket_start) or not self.counts:
            raise DataError(f"series {self.station_id!r}: need equal, non-zero numbers of buckets and counts")
        if any(c < 0 for c in self.counts):
            raise DataError(f"series {self.station_id!r}: negative count")
        if any(b2 <= b1 for b1, b2 in zip(self.bucket_start, self.bucket_start[1:])):
            raise DataError(f"series {self.station_id!r}: bucket starts must increase")

    def __len__(self):
        return len(self.counts)

    def values(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float)

    def slice(self, lo, hi=None) -> "IncidentSeries":
        return IncidentSeries(self.station_id, self.bucket_start[lo:hi], self.counts[lo:hi])

    def to_dict(self) -> dict:
        return {
            "station_id": self.station_id,
            "bucket_start": [d.isoformat() for d in self.bucket_start],
            "counts": list(self.counts),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "IncidentSeries":
        return cls(
            doc["station_id"],
            tuple(date.fromisoformat(d) for d in doc["bucket_start"]),
            tuple(int(c) for c in doc["counts"]),
        )


@dataclass(frozen=True)
class SplitSeries:
    train: IncidentSeries
    test: IncidentSeries


def _incident_arrays(incidents):
    if isinstance(incidents, IncidentLog):
        return incidents.arrays()
    return IncidentLog(list(incidents)).arrays()


def aggregate_many(incidents, stations: Iterable, radius_km: float = DEFAULT_RADIUS_KM,
                   bucket: str = "monthly", start=DEFAULT_START, end=DEFAULT_END) -> dict:
    """Per-station incident series for every station that has coordinates."""
    if not radius_km > 0:
        raise ValueError(f"radius_km must be > 0, got {radius_km}")
    starts = bucket_starts(start, end, bucket)
    stations = [s for s in stations if s.has_coords]
    lat, lon, ts = _incident_arrays(incidents)
    idx = bucket_index(ts, start, end, bucket)
    counts = kernels.count_within_radius(
        np.array([s.lat for s in stations], dtype=float),
        np.array([s.lon for s in stations], dtype=float),
        lat, lon, idx, len(starts), float(radius_km),
    )
    starts = tuple(starts)
    return {
        s.id: IncidentSeries(s.id, starts, tuple(int(c) for c in row))
        for s, row in zip(stations, counts)
    }


def aggregate_series(incidents, station, radius_km: float = DEFAULT_RADIUS_KM,
                     bucket: str = "monthly", start=DEFAULT_START, end=DEFAULT_END) -> IncidentSeries:
    """Count incidents within ``radius_km`` (inclusive) of ``station`` per bucket."""
    if not station.has_coords:
        raise DataError(f"station {station.id!r} has no coordinates")
    return aggregate_many(incidents, [station], radius_km, bucket, start, end)[station.id]


def split_train_test(series: IncidentSeries, test_size: int = TEST_SIZE) -> SplitSeries:
    """Hold out the last ``test_size`` buckets, zero or not."""
    if len(series) < test_size + MIN_TRAIN:
        raise DataError(
            f"series {series.station_id!r} has {len(series)} buckets; need at least "
            f"{test_size + MIN_TRAIN}. Widen the date range or use a finer bucket."
        )
    cut = len(series) - test_size
    return SplitSeries(series.slice(0, cut), series.slice(cut))


def safety_coefficients(forecasts: Mapping[str, float], floor: float = SAFETY_FLOOR,
                        model: str = "?") -> dict:
    """Turn next-bucket forecasts into mean-normalized safety coefficients.

    Each forecast is clamped to at least ``floor`` and divided by the mean of
    the clamped forecasts, so a typical station scores about 1.
    """
    clamped = {}
    for sid, value in forecasts.items():
        value = float(value)
        if not math.isfinite(value):
            raise DataError(f"model {model!r} produced a non-finite forecast for station {sid!r}")
        clamped[sid] = max(value, floor)
    if not clamped:
        return {}
    mean = sum(clamped.values()) / len(clamped)
    return {sid: v / mean for sid, v in clamped.items()}


def safety_coefficient(prediction: float, fleet_mean: float, floor: float = SAFETY_FLOOR) -> float:
    """Single-station form of :func:`safety_coefficients`; ``fleet_mean`` is the mean clamped forecast."""
    if not math.isfinite(prediction):
        raise DataError("non-finite forecast")
    return max(prediction, floor) / fleet_mean


# --------------------------------------------------------------------------
# series file
# --------------------------------------------------------------------------

def dump_series(series: Mapping[str, IncidentSeries], meta: Optional[Mapping] = None) -> str:
    doc = dict(meta or {})
    doc["series"] = [series[k].to_dict() for k in sorted(series)]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_series(text: str) -> tuple:
    """Returns ``(series by station id, metadata dict)``."""
    try:
        doc = json.loads(text)
        items = doc.pop("series")
    except (ValueError, KeyError, AttributeError) as exc:
        raise DataError(f"bad series file: {exc}") from None
    series = {}
    for item in items:
        s = IncidentSeries.from_dict(item)
        series[s.station_id] = s
    return series, doc
