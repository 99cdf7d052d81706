"""Re-estimating the spatial models across the robustness variants.

Every variant is one spatial fit: a spatial lag model when the error
structure is ``none`` and a spatial error model when it is ``spatial_error``.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .econometrics import ModelSpec, build_design, sar_lag_fit, sem_fit
from .spatial import WeightsMatrix
from .stats import trim_outliers

log = logging.getLogger(__name__)

RESPONSES = {"lambda": "log_lambda", "lq": "log_lq"}
KEY_TERMS = ("white", "black", "hispanic", "rent", "income_log")


@dataclass(frozen=True)
class Variant:
    outlier_k: float | None
    response: str
    min_listings: int
    weights: str
    error: str

    @property
    def name(self) -> str:
        k = "none" if self.outlier_k is None else f"{self.outlier_k:g}sd"
        return (f"trim={k}|response={self.response}|min={self.min_listings}"
                f"|weights={self.weights}|error={self.error}")


def variant_grid(
    outlier_k=(None, 2, 3),
    responses=("lambda", "lq"),
    min_listings=(0, 5, 10),
    weights=("queen", "distance_decay"),
    errors=("none", "spatial_error"),
) -> list[Variant]:
    return [Variant(*combo) for combo in itertools.product(
        outlier_k, responses, min_listings, weights, errors)]


def fit_variant(frame: pd.DataFrame, variant: Variant, weights: dict[str, WeightsMatrix],
                spec: ModelSpec = ModelSpec()):
    sub = frame[frame["kappa"] >= variant.min_listings]
    design = build_design(sub, ModelSpec(RESPONSES[variant.response], spec.predictors,
                                         spec.interactions, spec.fixed_effects))
    y, X, ids = design.y, design.X, np.array(design.tract_ids)
    if variant.outlier_k is not None:
        keep = trim_outliers(y, variant.outlier_k)
        y, X, ids = y[keep], X[keep], ids[keep]
    # dummies for cities that vanished after filtering
    live = np.any(X != 0, axis=0)
    names = [n for n, k in zip(design.names, live) if k]
    X = X[:, live]
    w = weights[variant.weights].subset(list(ids))
    if variant.error == "none":
        return sar_lag_fit(y, X, w, names)
    return sem_fit(y, X, w, names)


def run_robustness(
    frame: pd.DataFrame,
    weights: dict[str, WeightsMatrix],
    variants: list[Variant],
    spec: ModelSpec = ModelSpec(),
    threads: int = 1,
) -> pd.DataFrame:
    """Fit every variant; one output row per (variant, term).

    ``frame`` carries the model variables plus ``kappa``, ``log_lambda`` and
    ``log_lq``. Failed fits produce a single row with ``status`` set to the
    error so no variant disappears from the report.
    """

    def one(v: Variant) -> list[dict]:
        try:
            fit = fit_variant(frame, v, weights, spec)
        except Exception as exc:  # reported per variant, never dropped
            log.warning("robustness variant %s failed: %s", v.name, exc)
            return [{"variant": v.name, "term": None, "estimate": None, "se": None,
                     "sign": None, "significant": None, "n": None, "status": str(exc)}]
        rows = []
        for r in fit.report_rows():
            if r["term"].startswith("city["):
                continue
            est = r["estimate"]
            rows.append({
                "variant": v.name, "term": r["term"], "estimate": est, "se": r["se"],
                "sign": int(np.sign(est)), "significant": r["significant"],
                "n": fit.n, "status": "ok",
            })
        return rows

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, variants))
    else:
        results = [one(v) for v in variants]
    return pd.DataFrame([row for rows in results for row in rows])


def stability(report: pd.DataFrame, terms=KEY_TERMS) -> pd.DataFrame:
    """Share of variants in which each term keeps its modal sign, and the
    share in which it is significant."""
    n_variants = report["variant"].nunique()
    out = []
    for term in terms:
        sub = report[report["term"] == term]
        if sub.empty:
            continue
        signs = sub["sign"].astype(int)
        modal = int(np.sign(signs.sum())) or 1
        out.append({
            "term": term,
            "variants": n_variants,
            "fitted": len(sub),
            "modal_sign": modal,
            "sign_stable_share": float((signs == modal).sum() / n_variants),
            "significant_share": float(sub["significant"].fillna(False).astype(bool).sum()
                                       / n_variants),
        })
    return pd.DataFrame(out)
