import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import box

from rentrep.geo import build_index, haversine_km, spatial_join, write_join_report, write_kappa
from rentrep.ingest import ListingRecord

from conftest import grid_geometries, voronoi_geometries
from oracles import brute_force_join


def L(i, lon, lat):
    return ListingRecord(f"L{i:05d}", lon, lat, 1000.0)


def test_single_square_candidate():
    idx = build_index({"A": box(0, 0, 1, 1)})
    assert idx.candidates(0.5, 0.5) == ["A"]


def test_gap_between_squares_has_no_false_container():
    geoms = {"A": box(0, 0, 1, 1), "B": box(2, 0, 3, 1)}
    idx = build_index(geoms)
    assert idx.candidates(1.5, 0.5) == []
    res = spatial_join([L(0, 1.5, 0.5)], idx)
    assert res.unmatched == ["L00000"]


def test_candidates_superset_on_random_rectangles():
    rng = np.random.default_rng(3)
    geoms = {}
    for i in range(1000):
        x, y = rng.uniform(0, 100, 2)
        w, h = rng.uniform(0.1, 5, 2)
        geoms[f"R{i:04d}"] = box(x, y, x + w, y + h)
    idx = build_index(geoms)
    for _ in range(300):
        tid = f"R{rng.integers(1000):04d}"
        x0, y0, x1, y1 = geoms[tid].bounds
        px, py = rng.uniform(x0, x1), rng.uniform(y0, y1)
        assert tid in idx.candidates(px, py)


def test_centroid_assigned_and_outside_unmatched():
    geoms = grid_geometries(2)
    idx = build_index(geoms)
    res = spatial_join([L(0, 0.5, 0.5), L(1, 5, 5)], idx)
    assert res.assignments == {"L00000": "T000000"}
    assert res.unmatched == ["L00001"]
    assert res.kappa == {"T000000": 1, "T000001": 0, "T001000": 0, "T001001": 0}


def test_shared_boundary_goes_to_smallest_id():
    geoms = grid_geometries(2)
    idx = build_index(geoms)
    res = spatial_join([L(0, 1.0, 0.5), L(1, 1.0, 1.0)], idx)
    assert res.assignments == {"L00000": "T000000", "L00001": "T000000"}
    assert sum(res.kappa.values()) == 2
    assert len(res.ties) == 2 and res.ties[1][1] == ("T000000", "T000001", "T001000", "T001001")


def test_join_matches_brute_force_on_voronoi():
    geoms = voronoi_geometries(100, seed=11)
    rng = np.random.default_rng(12)
    pts = rng.uniform(-0.05, 1.05, size=(10_000, 2))
    listings = [L(i, x, y) for i, (x, y) in enumerate(pts)]
    res = spatial_join(listings, build_index(geoms))
    assert res.assignments == brute_force_join(listings, geoms)
    assert sum(res.kappa.values()) + len(res.unmatched) == len(listings)


def test_join_boundary_points_match_oracle_on_grid():
    geoms = grid_geometries(4)
    xs = np.arange(0, 4.01, 0.5)
    listings = [L(i, x, y) for i, (x, y) in enumerate((x, y) for x in xs for y in xs)]
    res = spatial_join(listings, build_index(geoms))
    assert res.assignments == brute_force_join(listings, geoms)
    assert res.unmatched == []


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 4), st.floats(-1, 4)), max_size=50))
def test_join_conservation(points):
    listings = [L(i, x, y) for i, (x, y) in enumerate(points)]
    res = spatial_join(listings, build_index(grid_geometries(3)))
    assert sum(res.kappa.values()) + len(res.unmatched) == len(listings)


def test_report_files(tmp_path):
    geoms = grid_geometries(2)
    listings = [L(0, 0.5, 0.5), L(1, 9, 9)]
    res = spatial_join(listings, build_index(geoms))
    write_join_report(tmp_path / "j.csv", listings, res)
    write_kappa(tmp_path / "k.csv", res)
    assert (tmp_path / "j.csv").read_text() == "listing_id,tract_id\nL00000,T000000\nL00001,UNMATCHED\n"
    assert (tmp_path / "k.csv").read_text().splitlines()[:2] == ["tract_id,kappa", "T000000,1"]


def test_haversine_basics():
    assert haversine_km((10, 20), (10, 20)) == 0
    assert haversine_km((0, 0), (0, 1)) == pytest.approx(2 * math.pi * 6371.0088 / 360, rel=1e-12)
    assert haversine_km((0, 0), (0, 1)) == pytest.approx(111.195, abs=1e-3)


lonlat = st.tuples(st.floats(-180, 180), st.floats(-90, 90))


@settings(max_examples=200, deadline=None)
@given(lonlat, lonlat, lonlat)
def test_haversine_metric_properties(a, b, c):
    ab, ba = haversine_km(a, b), haversine_km(b, a)
    assert ab == pytest.approx(ba, abs=1e-9) and ab >= 0
    assert haversine_km(a, c) <= ab + haversine_km(b, c) + 1e-9
