"""AIS track ingestion: delimited-text parsing, region filtering and a local
equirectangular projection to planar kilometres.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0


class DataError(Exception):
    """Raised for unusable input data (bad files, bad regions, too few points)."""


class IngestError(DataError):
    pass


class RegionError(DataError):
    pass


@dataclass(frozen=True)
class RawAisRecord:
    ship_id: str
    lat: float
    lon: float
    timestamp: str | None = None

    def __post_init__(self):
        if not self.ship_id:
            raise ValueError("ship_id must be non-empty")
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinates out of range: ({self.lat}, {self.lon})")


@dataclass(frozen=True)
class ProjectionOrigin:
    lat0: float
    lon0: float

    def __post_init__(self):
        if not (-90.0 <= self.lat0 <= 90.0) or not (-180.0 <= self.lon0 <= 180.0):
            raise ValueError(f"origin out of range: ({self.lat0}, {self.lon0})")


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float
    ship_id: str

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("planar coordinates must be finite")


@dataclass
class FormatConfig:
    """Column mapping for a delimited AIS table."""

    ship_id_col: str = "mmsi"
    lat_col: str = "lat"
    lon_col: str = "lon"
    timestamp_col: str | None = None
    delimiter: str = ","


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def parse_ais_file(stream: IO[bytes] | IO[str], fmt: FormatConfig | None = None):
    """Parse a delimited AIS table.

    Returns ``(records, skipped)`` where ``skipped`` counts rows that could not
    be parsed or carried out-of-range coordinates. A missing mandatory column or
    an undecodable stream raises :class:`IngestError`.
    """
    fmt = fmt or FormatConfig()
    try:
        raw = stream.read()
    except OSError as exc:
        raise IngestError(f"cannot read AIS stream: {exc}") from exc
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise IngestError(f"AIS stream is not valid UTF-8: {exc}") from exc
    else:
        text = raw

    reader = csv.DictReader(io.StringIO(text, newline=""), delimiter=fmt.delimiter)
    header = reader.fieldnames
    if header is None:
        raise IngestError("AIS stream has no header row")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    required = [fmt.ship_id_col, fmt.lat_col, fmt.lon_col]
    if fmt.timestamp_col:
        required.append(fmt.timestamp_col)
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestError(f"missing column(s) in header: {', '.join(missing)}")

    records: list[RawAisRecord] = []
    skipped = 0
    for row in reader:
        try:
            ship = (row[fmt.ship_id_col] or "").strip()
            lat = float(row[fmt.lat_col])
            lon = float(row[fmt.lon_col])
            ts = row[fmt.timestamp_col] if fmt.timestamp_col else None
            if not (math.isfinite(lat) and math.isfinite(lon)):
                raise ValueError("non-finite coordinate")
            records.append(RawAisRecord(ship, lat, lon, ts))
        except (TypeError, ValueError, AttributeError):
            skipped += 1
    if skipped:
        logger.info("skipped %d malformed AIS rows", skipped)
    return records, skipped


def read_ais_path(path: str | Path, fmt: FormatConfig | None = None):
    try:
        with open(path, "rb") as fh:
            return parse_ais_file(fh, fmt)
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# region filtering
# ---------------------------------------------------------------------------


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


@dataclass(frozen=True)
class RegionPolygon:
    """Simple polygon given as ``(lat, lon)`` vertices; closure is implicit."""

    vertices: tuple[tuple[float, float], ...] = field()

    def __post_init__(self):
        verts = tuple((float(a), float(b)) for a, b in self.vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise RegionError("region polygon needs at least 3 vertices")
        if not self._is_simple():
            raise RegionError("region polygon is self-intersecting")

    def _is_simple(self) -> bool:
        v = self.vertices
        n = len(v)
        if len(set(v)) != n:
            return False
        edges = [(v[i], v[(i + 1) % n]) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                # adjacent edges share a vertex by construction
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(*edges[i], *edges[j]):
                    return False
        return True

    @classmethod
    def from_bbox(cls, lat_min: float, lat_max: float, lon_min: float, lon_max: float) -> "RegionPolygon":
        if not (lat_min < lat_max and lon_min < lon_max):
            raise RegionError("bounding box must have lat_min < lat_max and lon_min < lon_max")
        return cls(((lat_min, lon_min), (lat_min, lon_max), (lat_max, lon_max), (lat_max, lon_min)))

    def contains(self, lats, lons) -> np.ndarray:
        """Vectorised ray-casting test; points on an edge count as inside."""
        y = np.atleast_1d(np.asarray(lats, dtype=float))
        x = np.atleast_1d(np.asarray(lons, dtype=float))
        inside = np.zeros(x.shape, dtype=bool)
        on_edge = np.zeros(x.shape, dtype=bool)
        v = self.vertices
        n = len(v)
        for i in range(n):
            yi, xi = v[i]
            yj, xj = v[(i - 1) % n]
            cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
            scale = max(abs(xj - xi), abs(yj - yi), 1.0)
            within = (
                (np.minimum(xi, xj) <= x) & (x <= np.maximum(xi, xj))
                & (np.minimum(yi, yj) <= y) & (y <= np.maximum(yi, yj))
            )
            on_edge |= within & (np.abs(cross) <= 1e-12 * scale)
            straddles = (yi > y) != (yj > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
            inside ^= straddles & (x < x_cross)
        return inside | on_edge


def load_region(path: str | Path) -> RegionPolygon:
    """Read a GeoJSON polygon (FeatureCollection, Feature or bare geometry).

    Only the outer ring is used; GeoJSON stores positions as ``[lon, lat]``.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise RegionError(f"cannot read region file {path}: {exc}") from exc

    if doc.get("type") == "FeatureCollection":
        feats = doc.get("features") or []
        if len(feats) != 1:
            raise RegionError(f"expected exactly one feature, found {len(feats)}")
        doc = feats[0]
    if doc.get("type") == "Feature":
        doc = doc.get("geometry") or {}
    if doc.get("type") != "Polygon":
        raise RegionError(f"unsupported geometry type {doc.get('type')!r}; need Polygon")
    rings = doc.get("coordinates") or []
    if not rings:
        raise RegionError("polygon has no coordinates")
    if len(rings) > 1:
        logger.warning("region polygon has %d interior ring(s); ignoring them", len(rings) - 1)
    try:
        verts = [(float(pos[1]), float(pos[0])) for pos in rings[0]]
    except (TypeError, ValueError, IndexError) as exc:
        raise RegionError(f"malformed polygon coordinates: {exc}") from exc
    return RegionPolygon(tuple(verts))


def filter_region(records: Sequence[RawAisRecord], region: RegionPolygon) -> list[RawAisRecord]:
    if not records:
        return []
    mask = region.contains([r.lat for r in records], [r.lon for r in records])
    return [r for r, keep in zip(records, mask) if keep]


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def mean_origin(records: Sequence[RawAisRecord]) -> ProjectionOrigin:
    if not records:
        raise IngestError("cannot derive a projection origin from zero records")
    return ProjectionOrigin(
        float(np.mean([r.lat for r in records])), float(np.mean([r.lon for r in records]))
    )


def project_arrays(lats, lons, origin: ProjectionOrigin):
    k = EARTH_RADIUS_KM * math.pi / 180.0
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    x = k * math.cos(math.radians(origin.lat0)) * (lons - origin.lon0)
    y = k * (lats - origin.lat0)
    return x, y


def project(records: Sequence[RawAisRecord], origin: ProjectionOrigin | None = None) -> list[PlanarPoint]:
    """Equirectangular projection about ``origin`` (default: mean lat/lon)."""
    if not records:
        return []
    if origin is None:
        origin = mean_origin(records)
    x, y = project_arrays([r.lat for r in records], [r.lon for r in records], origin)
    return [PlanarPoint(float(a), float(b), r.ship_id) for a, b, r in zip(x, y, records)]


def unproject(x, y, origin: ProjectionOrigin):
    """Inverse of :func:`project`; works on scalars or arrays."""
    coslat = math.cos(math.radians(origin.lat0))
    if abs(coslat) < 1e-12:
        raise ValueError("cannot unproject about a polar origin")
    k = EARTH_RADIUS_KM * math.pi / 180.0
    lat = np.asarray(y, dtype=float) / k + origin.lat0
    lon = np.asarray(x, dtype=float) / (k * coslat) + origin.lon0
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


def as_arrays(points: Iterable[PlanarPoint]):
    """Split planar points into an ``(N, 2)`` coordinate array and ship ids."""
    pts = list(points)
    xy = np.array([[p.x, p.y] for p in pts], dtype=float).reshape(-1, 2)
    return xy, [p.ship_id for p in pts]


# ---------------------------------------------------------------------------
# planar cache (ship_id, x_km, y_km) with a JSON origin sidecar
# ---------------------------------------------------------------------------

CACHE_COLUMNS = ("ship_id", "x_km", "y_km")


def origin_sidecar(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".origin.json")


def write_planar_csv(path: str | Path, points: Sequence[PlanarPoint], origin: ProjectionOrigin | None = None):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CACHE_COLUMNS)
        for p in points:
            w.writerow([p.ship_id, repr(p.x), repr(p.y)])
    if origin is not None:
        origin_sidecar(path).write_text(json.dumps({"lat0": origin.lat0, "lon0": origin.lon0}))


def is_planar_csv(path: str | Path) -> bool:
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
    except (OSError, UnicodeDecodeError):
        return False
    return [c.strip() for c in first.split(",")] == list(CACHE_COLUMNS)


def read_planar_csv(path: str | Path):
    """Returns ``(points, origin_or_None)``."""
    path = Path(path)
    points: list[PlanarPoint] = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or any(c not in reader.fieldnames for c in CACHE_COLUMNS):
                raise IngestError(f"{path} is not a planar point cache")
            for line, row in enumerate(reader, start=2):
                try:
                    points.append(PlanarPoint(float(row["x_km"]), float(row["y_km"]), row["ship_id"]))
                except (TypeError, ValueError) as exc:
                    raise IngestError(f"{path}:{line}: bad row ({exc})") from exc
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    origin = None
    side = origin_sidecar(path)
    if side.exists():
        d = json.loads(side.read_text())
        origin = ProjectionOrigin(d["lat0"], d["lon0"])
    return points, origin
