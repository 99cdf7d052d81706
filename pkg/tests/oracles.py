"""Brute-force reference implementations used only by the tests."""

import math

import numpy as np


def rings(geom):
    polys = geom.geoms if geom.geom_type == "MultiPolygon" else [geom]
    out = []
    for p in polys:
        out.append(np.asarray(p.exterior.coords))
        out.extend(np.asarray(r.coords) for r in p.interiors)
    return out


def _on_segment(px, py, a, b, tol=1e-12):
    ax, ay = a[:, 0][:, None], a[:, 1][:, None]
    bx, by = b[:, 0][:, None], b[:, 1][:, None]
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    within = (
        (np.minimum(ax, bx) - tol <= px) & (px <= np.maximum(ax, bx) + tol)
        & (np.minimum(ay, by) - tol <= py) & (py <= np.maximum(ay, by) + tol)
    )
    return np.any((np.abs(cross) <= tol) & within, axis=0)


def contains_even_odd(geom, px, py):
    """Even-odd ray casting over every ring, boundary inclusive."""
    px, py = np.asarray(px, float), np.asarray(py, float)
    inside = np.zeros(px.shape, bool)
    boundary = np.zeros(px.shape, bool)
    for ring in rings(geom):
        a, b = ring[:-1], ring[1:]
        ax, ay = a[:, 0][:, None], a[:, 1][:, None]
        bx, by = b[:, 0][:, None], b[:, 1][:, None]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
        crossings = np.sum(straddle & (px < xint), axis=0)
        inside ^= crossings % 2 == 1
        boundary |= _on_segment(px, py, a, b)
    return inside | boundary


def brute_force_join(listings, geometries):
    ids = sorted(geometries)
    lon = np.array([l.lon for l in listings])
    lat = np.array([l.lat for l in listings])
    owner = np.full(len(listings), None, dtype=object)
    for tid in reversed(ids):  # smallest id written last wins
        hit = contains_even_odd(geometries[tid], lon, lat)
        owner[hit] = tid
    return {l.listing_id: o for l, o in zip(listings, owner) if o is not None}


def gini_mad(x):
    """Gini as the mean absolute difference over twice the mean, O(n^2)."""
    x = np.asarray(x, float)
    n = x.size
    return float(np.abs(x[:, None] - x[None, :]).sum() / (2 * n * n * x.mean()))


def _point_segment_dist(p, a, b):
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    t = np.where(denom > 0, ((p[:, None, :] - a[None]) * ab[None]).sum(-1) / np.where(denom > 0, denom, 1), 0)
    t = np.clip(t, 0, 1)
    proj = a[None] + t[..., None] * ab[None]
    return np.sqrt(((p[:, None, :] - proj) ** 2).sum(-1))


def touches_brute(g1, g2, tol=1e-9):
    """Boundaries share a point: some vertex of one lies on an edge of the other."""
    for r1 in rings(g1):
        for r2 in rings(g2):
            if _point_segment_dist(r1, r2[:-1], r2[1:]).min() <= tol:
                return True
            if _point_segment_dist(r2, r1[:-1], r1[1:]).min() <= tol:
                return True
    return False


def ellipsoid_quad_area_km2(lon0, lat0, lon1, lat1, a=6378137.0, f=1 / 298.257223563):
    """Area of a lon/lat quadrangle on the WGS84 ellipsoid (closed form)."""
    e2 = f * (2 - f)
    e = math.sqrt(e2)
    b2 = a * a * (1 - e2)

    def q(phi):
        s = math.sin(phi)
        return s / (1 - e2 * s * s) + math.log((1 + e * s) / (1 - e * s)) / (2 * e)

    return abs(math.radians(lon1 - lon0) * b2 / 2 * (q(math.radians(lat1)) - q(math.radians(lat0)))) / 1e6
