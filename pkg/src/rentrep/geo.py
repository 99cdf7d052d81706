"""Great-circle distances and the listing-to-tract spatial join."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import shapely
from shapely import STRtree

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088


def haversine_km(a, b):
    """Great-circle distance in km between lon/lat points (degrees).

    Both arguments broadcast, so ``a`` may be an ``(n, 2)`` array.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lon1, lat1 = np.radians(a[..., 0]), np.radians(a[..., 1])
    lon2, lat2 = np.radians(b[..., 0]), np.radians(b[..., 1])
    h = (
        np.sin((lat2 - lat1) / 2) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    )
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


class SpatialIndex:
    """Bounding-box tree over tract polygons.

    Tracts are stored sorted by ``tract_id`` so that the smallest matching
    position is also the lexicographically smallest id.
    """

    def __init__(self, geometries: Mapping[str, object]):
        if not geometries:
            raise ValueError("cannot index an empty tract set")
        self.tract_ids = sorted(geometries)
        self.geometries = np.array([geometries[t] for t in self.tract_ids], dtype=object)
        self.degenerate = [
            t for t, g in zip(self.tract_ids, self.geometries) if g.is_empty or g.area == 0
        ]
        if self.degenerate:
            log.warning("indexed %d degenerate tract geometries", len(self.degenerate))
        self.tree = STRtree(self.geometries)

    def __len__(self):
        return len(self.tract_ids)

    def candidates(self, lon: float, lat: float) -> list[str]:
        """Tracts whose bounding box contains the point."""
        hits = self.tree.query(shapely.Point(lon, lat))
        return [self.tract_ids[i] for i in sorted(hits)]


def build_index(tracts) -> SpatialIndex:
    """Index either a ``tract_id -> geometry`` mapping or records with
    ``tract_id`` and ``geometry`` attributes."""
    if isinstance(tracts, Mapping):
        return SpatialIndex(tracts)
    return SpatialIndex({t.tract_id: t.geometry for t in tracts})


@dataclass
class JoinResult:
    assignments: dict[str, str]
    unmatched: list[str]
    kappa: dict[str, int]
    ties: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)

    @property
    def n_listings(self) -> int:
        return len(self.assignments) + len(self.unmatched)


def spatial_join(listings: Sequence, index: SpatialIndex) -> JoinResult:
    """Assign each listing to the tract polygon covering its point.

    Points on a boundary count as inside. A point covered by several tracts
    goes to the smallest ``tract_id`` and the tie is recorded.
    """
    ids = [lst.listing_id for lst in listings]
    lon = np.fromiter((lst.lon for lst in listings), float, len(ids))
    lat = np.fromiter((lst.lat for lst in listings), float, len(ids))
    pts = shapely.points(lon, lat)
    pairs = index.tree.query(pts, predicate="covered_by")
    order = np.lexsort((pairs[1], pairs[0]))
    pt_idx, tr_idx = pairs[0][order], pairs[1][order]

    kappa = dict.fromkeys(index.tract_ids, 0)
    assignments: dict[str, str] = {}
    ties = []
    first = np.ones(len(pt_idx), dtype=bool)
    first[1:] = pt_idx[1:] != pt_idx[:-1]
    starts = np.flatnonzero(first)
    ends = np.append(starts[1:], len(pt_idx))
    for s, e in zip(starts, ends):
        tract = index.tract_ids[tr_idx[s]]
        assignments[ids[pt_idx[s]]] = tract
        kappa[tract] += 1
        if e - s > 1:
            ties.append((ids[pt_idx[s]], tuple(index.tract_ids[j] for j in tr_idx[s:e])))
    for lid, tied in ties:
        log.info("listing %s on shared boundary of %s; assigned to %s", lid, tied, tied[0])
    unmatched = [lid for lid in ids if lid not in assignments]
    if unmatched:
        log.info("%d listings fall outside every tract", len(unmatched))
    return JoinResult(assignments, unmatched, kappa, ties)


def write_join_report(path: str | Path, listings: Iterable, result: JoinResult) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["listing_id", "tract_id"])
        for lst in listings:
            w.writerow([lst.listing_id, result.assignments.get(lst.listing_id, "UNMATCHED")])


def write_kappa(path: str | Path, result: JoinResult) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tract_id", "kappa"])
        for tid in sorted(result.kappa):
            w.writerow([tid, result.kappa[tid]])


def read_kappa(path: str | Path) -> dict[str, int]:
    with Path(path).open(newline="") as fh:
        return {row["tract_id"]: int(row["kappa"]) for row in csv.DictReader(fh)}
