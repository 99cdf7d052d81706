"""Difference-in-means contrasts between over- and under-represented tracts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy import special

ALPHA = 0.05


class TTestResult(NamedTuple):
    t: float
    df: float
    p: float


def _two_samples(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two observations")
    return a, b


def pooled_sd(a, b) -> float:
    a, b = _two_samples(a, b)
    na, nb = a.size, b.size
    return math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))


def cohens_d(a, b) -> float:
    """Standardized mean difference ``(mean(a) - mean(b)) / pooled_sd``."""
    a, b = _two_samples(a, b)
    sp = pooled_sd(a, b)
    if sp == 0:
        raise ValueError("pooled standard deviation is zero; effect size undefined")
    return float((a.mean() - b.mean()) / sp)


def effect_magnitude(d: float) -> str:
    d = abs(d)
    if d >= 0.8:
        return "large"
    if d >= 0.5:
        return "medium"
    if d >= 0.2:
        return "small"
    return "negligible"


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided Student-t tail probability via the regularized incomplete beta."""
    if t == 0:
        return 1.0
    return float(special.betainc(df / 2, 0.5, df / (df + t * t)))


def welch_t_test(a, b, equal_var: bool = False) -> TTestResult:
    """Two-sample t test, Welch by default, pooled-variance Student's t with
    ``equal_var=True``."""
    a, b = _two_samples(a, b)
    na, nb = a.size, b.size
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        raise ValueError("both samples have zero variance")
    diff = a.mean() - b.mean()
    if equal_var:
        df = na + nb - 2
        se = math.sqrt(((na - 1) * va + (nb - 1) * vb) / df * (1 / na + 1 / nb))
    else:
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        df = (qa + qb) ** 2 / (qa**2 / (na - 1) + qb**2 / (nb - 1))
    t = diff / se
    return TTestResult(float(t), float(df), t_sf_two_sided(t, df))


def trim_outliers(values, k: float) -> np.ndarray:
    """Boolean mask keeping values within ``k`` standard deviations of the mean.

    Mean and standard deviation are computed once on the full sample. A
    constant sample is returned whole.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    mu = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros(x.shape[1])
    keep = np.ones(len(x), dtype=bool)
    for j in range(x.shape[1]):
        if sd[j] > 0:
            keep &= np.abs(x[:, j] - mu[j]) <= k * sd[j]
    return keep


@dataclass
class GroupContrast:
    variable: str
    city_id: str | None
    n_over: int
    n_under: int
    mean_over: float | None = None
    mean_under: float | None = None
    delta: float | None = None
    cohen_d: float | None = None
    t_statistic: float | None = None
    df: float | None = None
    p_value: float | None = None
    significant_at_05: bool | None = None
    magnitude: str | None = None
    flag: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def contrast(
    variable: str,
    over,
    under,
    city_id: str | None = None,
    equal_var: bool = False,
) -> GroupContrast:
    over = np.asarray(over, dtype=float)
    under = np.asarray(under, dtype=float)
    row = GroupContrast(variable, city_id, int(over.size), int(under.size))
    if over.size < 2 or under.size < 2:
        row.flag = "group smaller than 2"
        return row
    row.mean_over, row.mean_under = float(over.mean()), float(under.mean())
    row.delta = row.mean_over - row.mean_under
    try:
        row.cohen_d = cohens_d(over, under)
        res = welch_t_test(over, under, equal_var=equal_var)
    except ValueError as exc:
        row.flag = str(exc)
        return row
    row.t_statistic, row.df, row.p_value = res
    row.significant_at_05 = res.p < ALPHA
    row.magnitude = effect_magnitude(row.cohen_d)
    return row


def contrast_table(
    frame: pd.DataFrame,
    variables: Sequence[str],
    grouping: str = "national",
    equal_var: bool = False,
    trim_k: float | None = None,
    response: str = "lambda",
) -> list[GroupContrast]:
    """Difference-in-means rows for each variable, nationally or per city.

    ``frame`` carries a ``class`` column (``over``/``under``/``exact``), the
    variables, ``city_id`` and ``response``. Tracts labelled ``exact`` enter
    neither group. With ``trim_k``, a tract is dropped from a variable's
    contrast when it is an outlier in that variable or in ``response``.
    National rows are sorted by descending ``d``.
    """
    if grouping not in ("national", "city"):
        raise ValueError("grouping must be 'national' or 'city'")
    groups = [(None, frame)] if grouping == "national" else [
        (str(c), g) for c, g in frame.groupby("city_id", sort=True)
    ]
    rows = []
    for city_id, g in groups:
        g = g[g["class"].isin(["over", "under"])]
        for var in variables:
            sub = g[[var, response, "class"]].dropna()
            if trim_k is not None and len(sub) >= 3:
                sub = sub[trim_outliers(sub[[var, response]].to_numpy(), trim_k)]
            over = sub.loc[sub["class"] == "over", var]
            under = sub.loc[sub["class"] == "under", var]
            rows.append(contrast(var, over, under, city_id, equal_var))
    if grouping == "national":
        rows.sort(key=lambda r: np.inf if r.cohen_d is None else -r.cohen_d)
    return rows


@dataclass
class DensityCurve:
    variable: str
    group: str
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    s = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(s, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = s
    return 0.9 * spread * x.size ** (-0.2)


def density_curve(sample, variable: str = "", group: str = "", n_points: int = 256) -> DensityCurve:
    """Gaussian kernel density estimate on an even grid spanning the sample
    widened by three bandwidths on each side."""
    x = np.asarray(sample, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < 2 or x.std() == 0:
        raise ValueError("density needs at least two distinct values")
    h = silverman_bandwidth(x)
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, n_points)
    dens = np.zeros(n_points)
    # chunk to bound memory at grid_size * chunk
    for start in range(0, x.size, 4096):
        z = (grid[:, None] - x[None, start:start + 4096]) / h
        with np.errstate(over="ignore", under="ignore"):
            dens += np.exp(-0.5 * z * z).sum(axis=1)
    dens /= x.size * h * math.sqrt(2 * math.pi)
    return DensityCurve(variable, group, grid, dens, h)
