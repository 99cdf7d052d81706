import numpy as np
import pytest
import shapely
from shapely.geometry import box

from rentrep.synth import SyntheticParams, generate_synthetic


def grid_geometries(n, size=1.0, prefix="T"):
    return {
        f"{prefix}{i:03d}{j:03d}": box(j * size, i * size, (j + 1) * size, (i + 1) * size)
        for i in range(n)
        for j in range(n)
    }


def voronoi_geometries(n, seed, extent=(0.0, 0.0, 1.0, 1.0)):
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = extent
    pts = shapely.multipoints(np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)]))
    frame = box(*extent)
    cells = shapely.voronoi_polygons(pts, extend_to=frame)
    return {f"V{i:04d}": c.intersection(frame) for i, c in enumerate(cells.geoms)}


@pytest.fixture
def grid3():
    return grid_geometries(3)


@pytest.fixture(scope="session")
def synthetic_fixture(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    info = generate_synthetic(out, SyntheticParams(seed=7, n_cities=2, grid=10))
    return out, info


def model_frame(n, n_cities=4, seed=0):
    """Random tract frame carrying every default model variable."""
    rng = np.random.default_rng(seed)
    white = rng.uniform(0, 1, n)
    black = rng.uniform(0, 1 - white)
    hispanic = rng.uniform(0, 1 - white - black)
    frame = {
        "tract_id": [f"{i:08d}" for i in range(n)],
        "city_id": [f"C{c:02d}" for c in rng.integers(0, n_cities, n)],
        "units": rng.uniform(0.2, 3, n),
        "vacancy": rng.uniform(0, 0.2, n),
        "sameres": rng.uniform(0.5, 0.95, n),
        "dcenter": rng.uniform(0.05, 40, n),
        "commute": rng.uniform(15, 45, n),
        "bb1940": rng.uniform(0, 0.6, n),
        "rooms": rng.uniform(2, 7, n),
        "rent": rng.uniform(0.5, 3, n),
        "income": np.exp(rng.normal(np.log(55), 0.4, n)),
        "age2034": rng.uniform(0.1, 0.4, n),
        "age65up": rng.uniform(0.05, 0.3, n),
        "student": rng.uniform(0, 0.3, n),
        "english": rng.uniform(0.4, 1, n),
        "hhsize": rng.uniform(1.5, 3.5, n),
        "degree": rng.uniform(0.1, 0.7, n),
        "white": white,
        "black": black,
        "hispanic": hispanic,
    }
    import pandas as pd

    out = pd.DataFrame(frame)
    out["log_lambda"] = 0.0
    return out


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; returns ``record(number, ok, detail)``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        lines.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
