"""Reading tract geometries, census attributes, listings and city definitions.

Census estimates arrive keyed by their ACS data-profile codes. ``derive_variables``
turns one tract's raw estimates into the analysis variables (proportions,
$ thousands, counts in thousands) used everywhere downstream.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

import yaml
from pyproj import Geod
from shapely.geometry import MultiPolygon, Polygon, shape

from .geo import haversine_km

log = logging.getLogger(__name__)

_GEOD = Geod(ellps="WGS84")

#: variable -> census source codes (percent estimates end in ``PE``)
SOURCES: dict[str, tuple[str, ...]] = {
    "age2034": ("DP05_0008PE", "DP05_0009PE"),
    "age65up": ("DP05_0021PE",),
    "bb1940": ("DP04_0025PE",),
    "black": ("DP05_0073PE",),
    "burden": ("DP04_0139PE", "DP04_0140PE"),
    "commute": ("DP03_0025E",),
    "degree": ("DP02_0067PE",),
    "density": ("DP05_0001E",),
    "english": ("DP02_0111PE",),
    "foreign": ("DP02_0092PE",),
    "hhsize": ("DP04_0048E",),
    "hispanic": ("DP05_0066PE",),
    "homeval": ("DP04_0088E",),
    "income": ("DP03_0062E",),
    "male": ("DP05_0002PE",),
    "nonrels": ("DP02_0022PE",),
    "poverty": ("DP03_0128PE",),
    "rent": ("DP04_0132E",),
    "rooms": ("DP04_0036E",),
    "sameres": ("DP02_0079PE",),
    "singldet": ("DP04_0007PE",),
    "student": ("DP02_0057PE",),
    "units": ("DP04_0046E", "DP04_0005E"),
    "vacancy": ("DP04_0046E", "DP04_0005E"),
    "white": ("DP05_0072PE",),
}

SOURCE_CODES: tuple[str, ...] = tuple(
    sorted({code for codes in SOURCES.values() for code in codes})
)

VARIABLES: tuple[str, ...] = tuple(sorted([*SOURCES, "dcenter"]))

PROPORTIONS = frozenset(
    var for var, codes in SOURCES.items() if codes[0].endswith("PE")
) | {"vacancy"}

_THOUSANDS = frozenset({"income", "rent", "homeval"})


class IngestError(ValueError):
    """Malformed input file; the message names the file and line or feature."""


class ValidationError(ValueError):
    """Well-formed input that violates a data invariant."""


@dataclass(frozen=True)
class RawTract:
    tract_id: str
    city_id: str
    estimates: Mapping[str, float | None]
    geometry: Polygon | MultiPolygon


@dataclass
class LoadResult:
    records: list[RawTract]
    unmatched_geometries: list[str] = field(default_factory=list)
    unmatched_attributes: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class CityDefinition:
    city_id: str
    name: str
    center: tuple[float, float]
    tract_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ListingRecord:
    listing_id: str
    lon: float
    lat: float
    rent: float
    city_id: str | None = None


@dataclass(frozen=True)
class TractRecord:
    """One tract in analysis units. Any variable may be ``None`` when its
    census estimate is missing; ``tau`` is the count of vacant units for rent."""

    tract_id: str
    city_id: str
    geometry: Polygon | MultiPolygon = field(repr=False, compare=False)
    land_area_km2: float
    centroid: tuple[float, float]
    tau: float | None
    age2034: float | None = None
    age65up: float | None = None
    bb1940: float | None = None
    black: float | None = None
    burden: float | None = None
    commute: float | None = None
    dcenter: float | None = None
    degree: float | None = None
    density: float | None = None
    english: float | None = None
    foreign: float | None = None
    hhsize: float | None = None
    hispanic: float | None = None
    homeval: float | None = None
    income: float | None = None
    male: float | None = None
    nonrels: float | None = None
    poverty: float | None = None
    rent: float | None = None
    rooms: float | None = None
    sameres: float | None = None
    singldet: float | None = None
    student: float | None = None
    units: float | None = None
    vacancy: float | None = None
    white: float | None = None

    @property
    def missing(self) -> tuple[str, ...]:
        return tuple(v for v in VARIABLES if getattr(self, v) is None)

    @property
    def complete(self) -> bool:
        return not self.missing

    def as_row(self) -> dict:
        row = {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "geometry"
        }
        row["centroid_lon"], row["centroid_lat"] = row.pop("centroid")
        return row


def _parse_number(text: str | None) -> float | None:
    if text is None:
        return None
    text = text.strip()
    if text == "" or text.upper() in {"NA", "NAN", "NULL", "N/A", "-"}:
        return None
    value = float(text)
    if math.isnan(value):
        return None
    return value


def read_geometries(path: str | Path) -> dict[str, Polygon | MultiPolygon]:
    """Read a GeoJSON FeatureCollection keyed by the ``tract_id`` property."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise IngestError(f"{path}: expected a GeoJSON FeatureCollection")
    out: dict[str, Polygon | MultiPolygon] = {}
    for i, feat in enumerate(doc.get("features", [])):
        try:
            tract_id = str(feat["properties"]["tract_id"])
            geom = shape(feat["geometry"])
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise IngestError(f"{path}: feature {i}: {exc!r}") from exc
        if not isinstance(geom, (Polygon, MultiPolygon)):
            raise IngestError(f"{path}: feature {i}: {geom.geom_type} is not a polygon")
        if tract_id in out:
            raise ValidationError(f"{path}: feature {i}: duplicate tract_id {tract_id}")
        out[tract_id] = geom
    return out


def read_attributes(path: str | Path) -> dict[str, tuple[str, dict[str, float | None]]]:
    """Read the attributes CSV into ``tract_id -> (city_id, estimates)``."""
    path = Path(path)
    out: dict[str, tuple[str, dict[str, float | None]]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("tract_id", "city_id"):
            if col not in header:
                raise IngestError(f"{path}: line 1: missing column {col!r}")
        codes = [c for c in header if c not in ("tract_id", "city_id")]
        for row in reader:
            line = reader.line_num
            if None in row:
                raise IngestError(f"{path}: line {line}: too many fields")
            tract_id = row["tract_id"].strip()
            if tract_id in out:
                raise ValidationError(f"{path}: line {line}: duplicate tract_id {tract_id}")
            estimates = {}
            for code in codes:
                try:
                    value = _parse_number(row[code])
                except ValueError as exc:
                    raise IngestError(f"{path}: line {line}: column {code}: {exc}") from exc
                if value is not None and code.endswith("PE") and not 0 <= value <= 100:
                    raise ValidationError(
                        f"{path}: line {line}: {code}={value} outside [0, 100]"
                    )
                estimates[code] = value
            out[tract_id] = (row["city_id"].strip(), estimates)
    return out


def load_tracts(geometry_file: str | Path, attributes_file: str | Path) -> LoadResult:
    """Join tract geometries to their census attribute rows on ``tract_id``.

    Tracts present in only one file are reported in the result rather than
    raising, so a partial attributes file can still be inspected.
    """
    geoms = read_geometries(geometry_file)
    attrs = read_attributes(attributes_file)
    records = [
        RawTract(tid, attrs[tid][0], attrs[tid][1], geoms[tid])
        for tid in sorted(geoms.keys() & attrs.keys())
    ]
    result = LoadResult(
        records,
        unmatched_geometries=sorted(geoms.keys() - attrs.keys()),
        unmatched_attributes=sorted(attrs.keys() - geoms.keys()),
    )
    if result.unmatched_geometries or result.unmatched_attributes:
        log.warning(
            "%d geometries and %d attribute rows without a match",
            len(result.unmatched_geometries),
            len(result.unmatched_attributes),
        )
    return result


def load_listings(path: str | Path) -> list[ListingRecord]:
    """Read a listings CSV with columns ``listing_id, lon, lat, rent``."""
    path = Path(path)
    out = []
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"listing_id", "lon", "lat", "rent"} - set(reader.fieldnames or [])
        if missing:
            raise IngestError(f"{path}: line 1: missing columns {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                lon, lat, rent = float(row["lon"]), float(row["lat"]), float(row["rent"])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}: line {line}: {exc}") from exc
            if not (-180 <= lon <= 180 and -90 <= lat <= 90):
                raise ValidationError(f"{path}: line {line}: coordinates out of range")
            if not rent > 0:
                raise ValidationError(f"{path}: line {line}: rent must be positive")
            lid = row["listing_id"].strip()
            if lid in seen:
                raise ValidationError(f"{path}: line {line}: duplicate listing_id {lid}")
            seen.add(lid)
            out.append(ListingRecord(lid, lon, lat, rent))
    return out


def load_cities(path: str | Path, tracts: Iterable[RawTract] = ()) -> dict[str, CityDefinition]:
    """Read the city config (YAML mapping ``city_id -> {name, center: [lon, lat]}``).

    Tract membership comes from the ``city_id`` column of the attributes file,
    so ``tracts`` is used to fill each city's tract set.
    """
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise IngestError(f"{path}: {exc}") from exc
    if isinstance(doc, dict) and "cities" in doc:
        doc = doc["cities"]
    if not isinstance(doc, dict):
        raise IngestError(f"{path}: expected a mapping of city_id to definitions")
    members: dict[str, set[str]] = {}
    for t in tracts:
        members.setdefault(t.city_id, set()).add(t.tract_id)
    cities = {}
    for city_id, spec in doc.items():
        city_id = str(city_id)
        try:
            lon, lat = (float(v) for v in spec["center"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: city {city_id}: center must be [lon, lat]") from exc
        cities[city_id] = CityDefinition(
            city_id,
            str(spec.get("name", city_id)),
            (lon, lat),
            frozenset(members.get(city_id, ())),
        )
    return cities


def geodesic_area_km2(geometry) -> float:
    area, _ = _GEOD.geometry_area_perimeter(geometry)
    return abs(area) / 1e6


def derive_variables(raw: RawTract, city: CityDefinition) -> TractRecord:
    """Convert raw census estimates into the analysis variables for one tract."""
    est = raw.estimates

    def get(code):
        value = est.get(code)
        if value is not None and value < 0:
            raise ValidationError(f"tract {raw.tract_id}: negative estimate {code}={value}")
        return value

    for code in est:
        get(code)

    area = geodesic_area_km2(raw.geometry)
    if area <= 0:
        raise ValidationError(f"tract {raw.tract_id}: zero land area")
    c = raw.geometry.centroid
    centroid = (c.x, c.y)

    values: dict[str, float | None] = {}
    for var, codes in SOURCES.items():
        parts = [get(code) for code in codes]
        if any(p is None for p in parts):
            values[var] = None
            continue
        if var == "units":
            values[var] = (parts[0] + parts[1]) / 1000
        elif var == "vacancy":
            total = parts[0] + parts[1]
            values[var] = parts[1] / total if total > 0 else None
        elif var == "density":
            values[var] = (parts[0] / 1000) / area
        elif var in PROPORTIONS:
            values[var] = sum(parts) / 100
        elif var in _THOUSANDS:
            values[var] = parts[0] / 1000
        else:
            values[var] = parts[0]
        if var in PROPORTIONS and values[var] is not None and values[var] > 1 + 1e-12:
            raise ValidationError(f"tract {raw.tract_id}: {var}={values[var]} exceeds 1")

    values["dcenter"] = float(haversine_km(centroid, city.center))
    return TractRecord(
        tract_id=raw.tract_id,
        city_id=raw.city_id,
        geometry=raw.geometry,
        land_area_km2=area,
        centroid=centroid,
        tau=get("DP04_0005E"),
        **values,
    )


@dataclass(frozen=True)
class Exclusion:
    tract_id: str
    reason: str


def filter_universe(tracts: Iterable[TractRecord]) -> tuple[list[TractRecord], list[Exclusion]]:
    """Drop tracts that contain no rental units."""
    kept, dropped = [], []
    for t in tracts:
        if t.units is not None and t.units == 0:
            dropped.append(Exclusion(t.tract_id, "no rental units"))
        elif t.tau is None:
            dropped.append(Exclusion(t.tract_id, "vacant-for-rent count missing"))
        else:
            kept.append(t)
    if not kept:
        log.warning("no tracts retained after filtering")
    return kept, dropped


def derive_all(
    records: Iterable[RawTract], cities: Mapping[str, CityDefinition]
) -> list[TractRecord]:
    out = []
    for raw in records:
        if raw.city_id not in cities:
            raise ValidationError(f"tract {raw.tract_id}: unknown city {raw.city_id!r}")
        out.append(derive_variables(raw, cities[raw.city_id]))
    return out
