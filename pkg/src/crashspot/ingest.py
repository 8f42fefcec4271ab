"""Parsing, validation and cleaning of raw incident records.

Raw feeds arrive as delimited text with one incident per row. Rows that cannot
be turned into an :class:`EventRecord` are collected as :class:`Rejection`
entries rather than aborting the batch, so a single dirty row never loses the
rest of the file.
"""
from __future__ import annotations

import csv
import io
import json
import os
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from typing import IO, Iterable, NamedTuple, Sequence, Union

import numpy as np

from .exceptions import ConfigError, SchemaError


class Category(str, Enum):
    VehicleObject = "VehicleObject"
    VehicleVehicle = "VehicleVehicle"
    Motorcycle = "Motorcycle"
    Rollover = "Rollover"
    HitAndRun = "HitAndRun"
    Pedestrian = "Pedestrian"
    Bicycle = "Bicycle"
    Animal = "Animal"
    SpecialVehicle = "SpecialVehicle"
    NonCollision = "NonCollision"


class Severity(str, Enum):
    Low = "Low"
    High = "High"


def _norm_token(text: str) -> str:
    return re.sub(r"[^0-9a-z]", "", text.strip().lower())


_CATEGORY_LOOKUP = {_norm_token(c.value): c for c in Category}
_SEVERITY_LOOKUP = {_norm_token(s.value): s for s in Severity}


def parse_category(text: str) -> Category:
    """Map a label such as ``"vehicle-object"`` or ``"Pedestrian"`` to a Category."""
    try:
        return _CATEGORY_LOOKUP[_norm_token(text)]
    except KeyError:
        raise ValueError(f"unknown category {text!r}") from None


def parse_severity(text: str) -> Severity:
    try:
        return _SEVERITY_LOOKUP[_norm_token(text)]
    except KeyError:
        raise ValueError(f"unknown severity {text!r}") from None


_TIMESTAMP_FORMATS = (
    "%d/%m/%Y %H:%M",
    "%d/%m/%Y %H:%M:%S",
    "%Y/%m/%d %H:%M",
    "%Y/%m/%d %H:%M:%S",
)


def parse_timestamp(text: str) -> datetime:
    """Parse a civil date-time and truncate it to the minute.

    Any UTC offset in the source is discarded without conversion: timestamps
    are treated as local clock readings throughout.
    """
    text = text.strip()
    if not text:
        raise ValueError("empty timestamp")
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        for fmt in _TIMESTAMP_FORMATS:
            try:
                ts = datetime.strptime(text, fmt)
                break
            except ValueError:
                continue
        else:
            raise ValueError(f"unparseable timestamp {text!r}") from None
    return ts.replace(second=0, microsecond=0, tzinfo=None)


@dataclass(frozen=True)
class EventRecord:
    """One geolocated, timestamped, severity-labelled incident."""

    id: str
    timestamp: datetime
    lon: float
    lat: float
    category: Category
    severity: Severity

    def __post_init__(self):
        if not self.id:
            raise ValueError("empty id")
        # accept the plain string values too
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "severity", Severity(self.severity))
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError("longitude out of range")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError("latitude out of range")


@dataclass(frozen=True)
class Rejection:
    row: int
    id: str
    reason: str


@dataclass(frozen=True)
class ColumnMapping:
    """Names of the source columns holding each EventRecord field."""

    id: str = "id"
    timestamp: str = "timestamp"
    lon: str = "lon"
    lat: str = "lat"
    category: str = "category"
    severity: str = "severity"

    @classmethod
    def from_dict(cls, mapping: dict | None) -> "ColumnMapping":
        mapping = dict(mapping or {})
        unknown = set(mapping) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown column mapping keys: {sorted(unknown)}")
        return cls(**mapping)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class ParseResult(NamedTuple):
    events: list[EventRecord]
    rejections: list[Rejection]


def _row_to_event(row: dict, schema: ColumnMapping) -> EventRecord:
    rid = (row[schema.id] or "").strip()
    if not rid:
        raise ValueError("missing id")
    try:
        ts = parse_timestamp(row[schema.timestamp] or "")
    except ValueError:
        raise ValueError("invalid timestamp") from None
    try:
        lon = float(row[schema.lon])
    except (TypeError, ValueError):
        raise ValueError("invalid longitude") from None
    try:
        lat = float(row[schema.lat])
    except (TypeError, ValueError):
        raise ValueError("invalid latitude") from None
    if not np.isfinite(lon):
        raise ValueError("invalid longitude")
    if not np.isfinite(lat):
        raise ValueError("invalid latitude")
    if not -90.0 <= lat <= 90.0:
        raise ValueError("latitude out of range")
    if not -180.0 <= lon <= 180.0:
        raise ValueError("longitude out of range")
    category = parse_category(row[schema.category] or "")
    severity = parse_severity(row[schema.severity] or "")
    return EventRecord(rid, ts, lon, lat, category, severity)


def parse_events(
    source: Union[str, os.PathLike, IO[str]],
    schema: ColumnMapping | None = None,
    delimiter: str = ",",
) -> ParseResult:
    """Read delimited text with a header row into events plus rejections.

    ``source`` is a path or an open text stream. A header lacking any mapped
    column raises :class:`SchemaError`; I/O failures propagate unchanged.
    Rejections carry the 1-based physical line number of the offending row.
    """
    schema = schema or ColumnMapping()
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_events(fh, schema, delimiter)

    reader = csv.DictReader(source, delimiter=delimiter)
    header = reader.fieldnames or []
    missing = [c for c in schema.as_dict().values() if c not in header]
    if missing:
        raise SchemaError(f"missing mapped column(s): {', '.join(missing)}")

    events: list[EventRecord] = []
    rejections: list[Rejection] = []
    for row in reader:
        line = reader.line_num
        if None in row or any(v is None for v in row.values()):
            rejections.append(Rejection(line, (row.get(schema.id) or "").strip(), "wrong field count"))
            continue
        try:
            events.append(_row_to_event(row, schema))
        except ValueError as exc:
            rejections.append(Rejection(line, (row.get(schema.id) or "").strip(), str(exc)))
    return ParseResult(events, rejections)


EVENT_COLUMNS = ("id", "timestamp", "lon", "lat", "category", "severity")


def write_events(path: Union[str, os.PathLike], events: Iterable[EventRecord], delimiter: str = ",") -> None:
    """Write events in the default column schema (readable by :func:`parse_events`)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(EVENT_COLUMNS)
        for e in events:
            writer.writerow(
                [e.id, e.timestamp.strftime("%Y-%m-%d %H:%M"), repr(e.lon), repr(e.lat), e.category.value, e.severity.value]
            )


def write_rejections(path: Union[str, os.PathLike], rejections: Iterable[Rejection]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "id", "reason"])
        for r in rejections:
            writer.writerow([r.row, r.id, r.reason])


# --------------------------------------------------------------------------
# Study window


@dataclass(frozen=True)
class StudyWindow:
    """Inclusive calendar window with an optional set of days lacking data."""

    start_date: date
    end_date: date
    missing_dates: frozenset[date] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "missing_dates", frozenset(self.missing_dates))
        if self.start_date > self.end_date:
            raise ConfigError("window start_date is after end_date")
        outside = [d for d in self.missing_dates if not self.start_date <= d <= self.end_date]
        if outside:
            raise ConfigError(f"missing dates outside window: {sorted(outside)}")
        if self.observed_days <= 0:
            raise ConfigError("window has no observed days")

    @property
    def span_days(self) -> int:
        return (self.end_date - self.start_date).days + 1

    @property
    def observed_days(self) -> int:
        return self.span_days - len(self.missing_dates)

    def contains(self, day: date) -> bool:
        return self.start_date <= day <= self.end_date

    def months(self) -> list[tuple[int, int]]:
        """Calendar (year, month) pairs touched by the window, in order."""
        out = []
        y, m = self.start_date.year, self.start_date.month
        while (y, m) <= (self.end_date.year, self.end_date.month):
            out.append((y, m))
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)
        return out

    def observed_dates(self) -> list[date]:
        ordinals = range(self.start_date.toordinal(), self.end_date.toordinal() + 1)
        return [d for d in map(date.fromordinal, ordinals) if d not in self.missing_dates]

    @classmethod
    def from_strings(cls, start: str, end: str, missing: Sequence[str] = ()) -> "StudyWindow":
        try:
            return cls(
                date.fromisoformat(start),
                date.fromisoformat(end),
                frozenset(date.fromisoformat(m) for m in missing),
            )
        except ValueError as exc:
            raise ConfigError(f"bad window date: {exc}") from None


class FilterOutcome(NamedTuple):
    kept: list[EventRecord]
    removed: list[EventRecord]


def filter_window(events: Iterable[EventRecord], window: StudyWindow) -> FilterOutcome:
    kept, removed = [], []
    for e in events:
        (kept if window.contains(e.timestamp.date()) else removed).append(e)
    return FilterOutcome(kept, removed)


def dedupe(events: Iterable[EventRecord]) -> FilterOutcome:
    """Keep the first record for each id; later records with the same id are removed."""
    seen: set[str] = set()
    kept, removed = [], []
    for e in events:
        if e.id in seen:
            removed.append(e)
        else:
            seen.add(e.id)
            kept.append(e)
    return FilterOutcome(kept, removed)


def filter_categories(events: Iterable[EventRecord], categories: Iterable[Category]) -> FilterOutcome:
    wanted = frozenset(categories)
    kept, removed = [], []
    for e in events:
        (kept if e.category in wanted else removed).append(e)
    return FilterOutcome(kept, removed)


# --------------------------------------------------------------------------
# Boundary polygons


def _ring_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py):
    return (np.minimum(ax, bx) <= px) & (px <= np.maximum(ax, bx)) & (np.minimum(ay, by) <= py) & (py <= np.maximum(ay, by))


def _ring_is_simple(ring: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the closed ring touch."""
    a = ring[:-1]
    b = ring[1:]
    n = len(a)
    for i in range(n - 2):
        j = np.arange(i + 2, n)
        if i == 0:
            j = j[j != n - 1]
        if j.size == 0:
            continue
        p1x, p1y, p2x, p2y = a[i, 0], a[i, 1], b[i, 0], b[i, 1]
        q1x, q1y, q2x, q2y = a[j, 0], a[j, 1], b[j, 0], b[j, 1]
        d1 = _orient(q1x, q1y, q2x, q2y, p1x, p1y)
        d2 = _orient(q1x, q1y, q2x, q2y, p2x, p2y)
        d3 = _orient(p1x, p1y, p2x, p2y, q1x, q1y)
        d4 = _orient(p1x, p1y, p2x, p2y, q2x, q2y)
        proper = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)
        touch = (
            ((d1 == 0) & _on_segment(q1x, q1y, q2x, q2y, p1x, p1y))
            | ((d2 == 0) & _on_segment(q1x, q1y, q2x, q2y, p2x, p2y))
            | ((d3 == 0) & _on_segment(p1x, p1y, p2x, p2y, q1x, q1y))
            | ((d4 == 0) & _on_segment(p1x, p1y, p2x, p2y, q2x, q2y))
        )
        if np.any(proper | touch):
            return False
    return True


@dataclass(frozen=True, eq=False)
class BoundaryPolygon:
    """Polygon in lon/lat degrees; ``rings[0]`` is the outer ring, the rest are holes."""

    rings: tuple

    def __post_init__(self):
        rings = tuple(np.asarray(r, dtype=float) for r in self.rings)
        if not rings:
            raise ConfigError("polygon has no rings")
        for r in rings:
            if r.ndim != 2 or r.shape[1] != 2 or len(r) < 4:
                raise ConfigError("each ring needs at least 4 (lon, lat) vertices")
            if not np.array_equal(r[0], r[-1]):
                raise ConfigError("ring is not closed (first vertex != last vertex)")
        if _ring_area(rings[0]) == 0.0:
            raise ConfigError("degenerate boundary polygon (zero area)")
        if not _ring_is_simple(rings[0]):
            raise ConfigError("outer boundary ring self-intersects")
        object.__setattr__(self, "rings", rings)

    def contains(self, lon, lat) -> np.ndarray:
        """Even-odd test over all rings; points on any edge count as inside."""
        px = np.atleast_1d(np.asarray(lon, dtype=float))
        py = np.atleast_1d(np.asarray(lat, dtype=float))
        inside = np.zeros(px.shape, dtype=bool)
        on_edge = np.zeros(px.shape, dtype=bool)
        for ring in self.rings:
            for (xi, yi), (xj, yj) in zip(ring[:-1], ring[1:]):
                cross = _orient(xi, yi, xj, yj, px, py)
                on_edge |= (cross == 0) & _on_segment(xi, yi, xj, yj, px, py)
                straddles = (yi > py) != (yj > py)
                with np.errstate(divide="ignore", invalid="ignore"):
                    x_at = (xj - xi) * (py - yi) / (yj - yi) + xi
                inside ^= straddles & (px < x_at)
        return inside | on_edge


Boundary = Union[BoundaryPolygon, Sequence[BoundaryPolygon]]


def _polygons(boundary: Boundary) -> list[BoundaryPolygon]:
    return [boundary] if isinstance(boundary, BoundaryPolygon) else list(boundary)


def spatial_filter(events: Sequence[EventRecord], boundary: Boundary) -> FilterOutcome:
    events = list(events)
    if not events:
        return FilterOutcome([], [])
    lon = np.array([e.lon for e in events])
    lat = np.array([e.lat for e in events])
    mask = np.zeros(len(events), dtype=bool)
    for poly in _polygons(boundary):
        mask |= poly.contains(lon, lat)
    kept = [e for e, m in zip(events, mask) if m]
    removed = [e for e, m in zip(events, mask) if not m]
    return FilterOutcome(kept, removed)


def boundary_from_geojson(obj: dict) -> list[BoundaryPolygon]:
    """Build polygons from a GeoJSON Polygon, MultiPolygon, Feature or FeatureCollection."""
    kind = obj.get("type")
    if kind == "FeatureCollection":
        return [p for f in obj.get("features", []) for p in boundary_from_geojson(f)]
    if kind == "Feature":
        return boundary_from_geojson(obj.get("geometry") or {})
    if kind == "Polygon":
        return [BoundaryPolygon(tuple(obj["coordinates"]))]
    if kind == "MultiPolygon":
        return [BoundaryPolygon(tuple(rings)) for rings in obj["coordinates"]]
    raise ConfigError(f"unsupported boundary geometry type {kind!r}")


def load_boundary(path: Union[str, os.PathLike]) -> list[BoundaryPolygon]:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"boundary file is not valid JSON: {exc}") from None
    polys = boundary_from_geojson(obj)
    if not polys:
        raise ConfigError("boundary file contains no polygons")
    return polys


# --------------------------------------------------------------------------
# Category breakdown


@dataclass(frozen=True)
class CategoryShare:
    category: Category
    count: int
    percent: float

    @property
    def percent_rounded(self) -> float:
        return round(self.percent, 2)


def subcategory_shares(events: Iterable[EventRecord]) -> list[CategoryShare]:
    """Count and percentage per category, ordered by descending count."""
    counts: dict[Category, int] = {}
    for e in events:
        counts[e.category] = counts.get(e.category, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return []
    order = list(Category)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], order.index(kv[0])))
    return [CategoryShare(c, n, 100.0 * n / total) for c, n in ranked]


def events_from_text(text: str, schema: ColumnMapping | None = None, delimiter: str = ",") -> ParseResult:
    """Convenience wrapper around :func:`parse_events` for in-memory CSV."""
    return parse_events(io.StringIO(text), schema, delimiter)
