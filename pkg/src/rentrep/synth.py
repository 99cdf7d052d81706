"""Synthetic cities with a known listing bias, for end-to-end checks.

Each city is a grid of square tracts. Demographics are drawn from smooth
random fields so that majority-White, -Black and -Hispanic neighbourhoods
cluster as they do in real cities. Listings per tract are Poisson with rate
``listings_per_vacancy * tau * exp(bias * white)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy.ndimage import gaussian_filter

from .ingest import SOURCE_CODES

CELL_DEG = 0.01


@dataclass(frozen=True)
class SyntheticParams:
    seed: int = 0
    n_cities: int = 2
    grid: int = 15
    bias: float = 1.5
    listings_per_vacancy: float = 1.0
    empty_tracts: int = 1


def _smooth_field(rng, size, sigma=2.0):
    f = gaussian_filter(rng.normal(size=(size, size)), sigma, mode="wrap")
    return (f - f.mean()) / f.std()


def _city_attributes(rng, size):
    n = size * size
    # softmax over white/black/hispanic/other latent fields
    logits = np.stack([
        1.2 + 2.5 * _smooth_field(rng, size),
        0.2 + 2.5 * _smooth_field(rng, size),
        0.4 + 2.5 * _smooth_field(rng, size),
        np.zeros((size, size)),
    ]).reshape(4, n)
    shares = np.exp(logits)
    shares /= shares.sum(axis=0)
    white, black, hispanic = shares[0], shares[1], shares[2]

    def pct(p):
        return np.round(100 * np.clip(p, 0, 1), 1)

    def beta(mean, conc=20):
        return rng.beta(mean * conc, (1 - mean) * conc)

    income = np.exp(rng.normal(np.log(50_000) + 0.6 * (white - 0.4), 0.45, n))
    renters = rng.integers(200, 1500, n)
    vac_rate = rng.beta(2, 30, n)
    vacant = rng.poisson(renters * vac_rate / (1 - vac_rate))
    age2034 = beta(np.full(n, 0.25))
    a1 = rng.uniform(0.3, 0.7, n)
    burden = beta(np.full(n, 0.45))
    b1 = rng.uniform(0.3, 0.7, n)
    return {
        "DP05_0008PE": pct(age2034 * a1),
        "DP05_0009PE": pct(age2034 * (1 - a1)),
        "DP05_0021PE": pct(beta(np.full(n, 0.12))),
        "DP04_0025PE": pct(beta(np.full(n, 0.15), 5)),
        "DP05_0073PE": pct(black),
        "DP04_0139PE": pct(burden * b1),
        "DP04_0140PE": pct(burden * (1 - b1)),
        "DP03_0025E": np.round(rng.uniform(18, 45, n), 1),
        "DP02_0067PE": pct(beta(np.clip(0.15 + 0.3 * white, 0.05, 0.9))),
        "DP05_0001E": rng.integers(1500, 8000, n),
        "DP02_0111PE": pct(beta(np.clip(0.85 - 0.5 * hispanic, 0.1, 0.95))),
        "DP02_0092PE": pct(beta(np.clip(0.1 + 0.4 * hispanic, 0.05, 0.9))),
        "DP04_0048E": np.round(rng.uniform(1.5, 3.8, n), 2),
        "DP05_0066PE": pct(hispanic),
        "DP04_0088E": np.round(income * rng.uniform(3, 6, n), -2),
        "DP03_0062E": np.round(income),
        "DP05_0002PE": pct(beta(np.full(n, 0.49), 200)),
        "DP02_0022PE": pct(beta(np.full(n, 0.08))),
        "DP03_0128PE": pct(beta(np.clip(0.35 - 0.25 * white, 0.03, 0.8))),
        "DP04_0132E": np.round(income * 0.3 / 12 * rng.uniform(0.7, 1.3, n)),
        "DP04_0036E": np.round(rng.uniform(3, 7, n), 1),
        "DP02_0079PE": pct(beta(np.full(n, 0.8))),
        "DP04_0007PE": pct(beta(np.full(n, 0.4), 5)),
        "DP02_0057PE": pct(beta(np.full(n, 0.1))),
        "DP04_0046E": renters,
        "DP04_0005E": vacant,
        "DP05_0072PE": pct(white),
    }


def generate_synthetic(out_dir: str | Path, params: SyntheticParams = SyntheticParams()) -> dict:
    """Write a synthetic fixture and return paths plus summary counts.

    Files: ``tracts.geojson``, ``attributes.csv``, ``listings.csv``,
    ``cities.yaml`` and ``truth.json`` (the generating parameters).
    """
    if params.grid < 3:
        raise ValueError("grid must be at least 3x3")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(params.seed)
    size = params.grid

    features, rows, listings, cities = [], [], [], {}
    for c in range(params.n_cities):
        city_id = f"C{c + 1:02d}"
        lon0, lat0 = -100.0 + 2.0 * c, 35.0
        cities[city_id] = {
            "name": f"Synthetic City {c + 1}",
            "center": [lon0 + size * CELL_DEG / 2, lat0 + size * CELL_DEG / 2],
        }
        attrs = _city_attributes(rng, size)
        if params.empty_tracts:
            idx = rng.choice(size * size, params.empty_tracts, replace=False)
            attrs["DP04_0046E"][idx] = 0
            attrs["DP04_0005E"][idx] = 0
        white = attrs["DP05_0072PE"] / 100
        rate = params.listings_per_vacancy * attrs["DP04_0005E"] * np.exp(params.bias * white)
        counts = rng.poisson(rate)
        for k in range(size * size):
            i, j = divmod(k, size)
            x0, y0 = round(lon0 + j * CELL_DEG, 6), round(lat0 + i * CELL_DEG, 6)
            x1, y1 = round(x0 + CELL_DEG, 6), round(y0 + CELL_DEG, 6)
            tract_id = f"{c + 1:02d}{k:09d}"
            features.append({
                "type": "Feature",
                "properties": {"tract_id": tract_id},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]],
                },
            })
            row = {"tract_id": tract_id, "city_id": city_id}
            row.update({code: attrs[code][k] for code in SOURCE_CODES})
            rows.append(row)
            m = counts[k]
            # keep points strictly inside the cell
            lon = rng.uniform(x0 + 1e-6, x1 - 1e-6, m)
            lat = rng.uniform(y0 + 1e-6, y1 - 1e-6, m)
            rent = np.maximum(
                np.round(attrs["DP04_0132E"][k] * rng.lognormal(0, 0.25, m)), 100
            )
            for a, b, r in zip(lon, lat, rent):
                listings.append((f"L{len(listings):07d}", round(a, 7), round(b, 7), r))
        # a few listings outside every tract
        for _ in range(3):
            listings.append((f"L{len(listings):07d}", lon0 - 0.5, lat0 - 0.5, 1000.0))

    paths = {
        "tracts": out / "tracts.geojson",
        "attributes": out / "attributes.csv",
        "listings": out / "listings.csv",
        "cities": out / "cities.yaml",
        "truth": out / "truth.json",
    }
    paths["tracts"].write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    with paths["attributes"].open("w", newline="") as fh:
        w = csv.DictWriter(fh, ["tract_id", "city_id", *SOURCE_CODES], lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    with paths["listings"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["listing_id", "lon", "lat", "rent"])
        for lid, lon, lat, rent in listings:
            w.writerow([lid, repr(float(lon)), repr(float(lat)), _fmt(rent)])
    paths["cities"].write_text(yaml.safe_dump(cities, sort_keys=True))
    truth = {**asdict(params), "n_tracts": len(rows), "n_listings": len(listings)}
    paths["truth"].write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return {"paths": {k: str(v) for k, v in paths.items()}, **truth}


def _fmt(v):
    if isinstance(v, str):
        return v
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)
