"""Expected listing counts, representation ratios and concentration measures."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

VERY_UNDER = 0.25
MAJORITY_GROUPS = ("white", "black", "hispanic")

REPRESENTATION_COLUMNS = [
    "tract_id", "city_id", "kappa", "phi", "lambda", "log_lambda",
    "class", "very_under", "majority",
]


def expected_counts(tau, kappa_total: float) -> np.ndarray:
    """Reallocate a city's listings across its tracts by vacant-rental share.

    Parameters
    ----------
    tau : array_like
        Vacant units for rent in each tract of one city.
    kappa_total : float
        Number of listings observed in the city.

    Returns
    -------
    ndarray
        ``kappa_total * tau / tau.sum()``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("vacant unit counts must be nonnegative")
    total = tau.sum()
    if not total > 0:
        raise ValueError("city has no vacant units for rent")
    return kappa_total * (tau / total)


def representation(kappa, phi):
    """Add-one smoothed ratio of observed to expected listings."""
    kappa = np.asarray(kappa, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return (kappa + 1.0) / (phi + 1.0)


def log_representation(kappa, phi):
    # log1p keeps log(r(a, b)) == -log(r(b, a)) bit-exact
    return np.log1p(np.asarray(kappa, dtype=float)) - np.log1p(np.asarray(phi, dtype=float))


def gini(values) -> float:
    """Gini coefficient of a nonnegative vector; ``nan`` when the sum is zero."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    n = x.size
    if n == 0 or np.any(x < 0):
        raise ValueError("gini needs a nonempty nonnegative vector")
    total = x.sum()
    if total <= 0:
        return float("nan")
    i = np.arange(1, n + 1)
    return float(np.sum((2 * i - n - 1) * x) / (n * total))


def classify(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return np.where(lam > 1, "over", np.where(lam < 1, "under", "exact"))


def majority(white, black, hispanic) -> np.ndarray:
    """Group holding a strict majority of the population, else ``"none"``."""
    shares = np.column_stack([
        np.asarray(v, dtype=float) for v in (white, black, hispanic)
    ])
    out = np.full(len(shares), "none", dtype=object)
    for j, g in enumerate(MAJORITY_GROUPS):
        out[shares[:, j] > 0.5] = g
    return out


def representation_table(tracts: pd.DataFrame) -> tuple[pd.DataFrame, list[dict]]:
    """Per-tract observed and expected counts, ratios and labels.

    ``tracts`` needs ``tract_id, city_id, tau, kappa`` and the race shares.
    Cities with no vacant rental units are dropped and reported in the
    returned error list.
    """
    parts, errors = [], []
    for city_id, grp in tracts.sort_values("tract_id").groupby("city_id", sort=True):
        try:
            phi = expected_counts(grp["tau"].to_numpy(), grp["kappa"].sum())
        except ValueError as exc:
            log.error("city %s excluded: %s", city_id, exc)
            errors.append({"city_id": city_id, "error": str(exc)})
            continue
        kappa = grp["kappa"].to_numpy(dtype=float)
        lam = representation(kappa, phi)
        parts.append(pd.DataFrame({
            "tract_id": grp["tract_id"].to_numpy(),
            "city_id": city_id,
            "kappa": grp["kappa"].to_numpy(dtype=int),
            "tau": grp["tau"].to_numpy(dtype=float),
            "phi": phi,
            "lambda": lam,
            "log_lambda": log_representation(kappa, phi),
            "class": classify(lam),
            "very_under": lam < VERY_UNDER,
            "majority": majority(grp["white"].fillna(0), grp["black"].fillna(0),
                                 grp["hispanic"].fillna(0)),
        }))
    if not parts:
        return pd.DataFrame(columns=REPRESENTATION_COLUMNS + ["tau"]), errors
    return pd.concat(parts, ignore_index=True), errors


@dataclass(frozen=True)
class GiniReport:
    city_id: str
    n_tracts: int
    gini_observed: float
    gini_expected: float

    @property
    def ratio_pct_difference(self) -> float:
        """Percent by which the observed Gini exceeds the expected one."""
        return 100 * (self.gini_observed / self.gini_expected - 1)


def gini_reports(table: pd.DataFrame) -> list[GiniReport]:
    """One report per city plus a pooled ``ALL`` row and a ``MEAN`` of cities."""
    reports = [
        GiniReport(str(c), len(g), gini(g["kappa"]), gini(g["phi"]))
        for c, g in table.groupby("city_id", sort=True)
    ]
    if reports:
        reports.append(GiniReport("ALL", len(table), gini(table["kappa"]), gini(table["phi"])))
        reports.append(GiniReport(
            "MEAN",
            len(table),
            float(np.nanmean([r.gini_observed for r in reports[:-1]])),
            float(np.nanmean([r.gini_expected for r in reports[:-1]])),
        ))
    return reports


def class_by_majority(table: pd.DataFrame) -> pd.DataFrame:
    """Cross-tab of representation class by majority group, with rates."""
    counts = pd.crosstab(table["majority"], table["class"])
    for col in ("over", "under", "exact"):
        if col not in counts:
            counts[col] = 0
    counts = counts[["over", "under", "exact"]]
    very = table.groupby("majority")["very_under"].sum().reindex(counts.index).fillna(0)
    out = counts.copy()
    out["n"] = counts.sum(axis=1)
    out["very_under"] = very.astype(int)
    out["over_rate"] = out["over"] / out["n"]
    out["very_under_rate"] = out["very_under"] / out["n"]
    return out.reset_index()


def share_comparison(table: pd.DataFrame, mask) -> tuple[float, float]:
    """Expected and observed shares of all listings falling in tracts where
    ``mask`` holds."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0.0, 0.0
    phi, kappa = table["phi"].to_numpy(), table["kappa"].to_numpy(dtype=float)
    expected = phi[mask].sum() / phi.sum() if phi.sum() > 0 else 0.0
    observed = kappa[mask].sum() / kappa.sum() if kappa.sum() > 0 else 0.0
    return float(expected), float(observed)


#: default listing-share predicates over a merged tract/representation frame
DEFAULT_PREDICATES: dict[str, Callable[[pd.DataFrame], pd.Series]] = {
    "income_gt_55k": lambda df: df["income"] > 55,
    "majority_white": lambda df: df["majority"] == "white",
    "majority_black": lambda df: df["majority"] == "black",
    "majority_hispanic": lambda df: df["majority"] == "hispanic",
    "degree_gt_50pct": lambda df: df["degree"] > 0.5,
    "poverty_gt_20pct": lambda df: df["poverty"] > 0.2,
}


def affordability_share(rents, annual_income: float) -> float:
    """Fraction of monthly asking rents below 30% of ``annual_income``."""
    if not annual_income > 0:
        raise ValueError("annual income must be positive")
    rents = np.asarray(rents, dtype=float)
    if rents.size == 0:
        return float("nan")
    return float(np.mean(12 * rents < 0.30 * annual_income))
