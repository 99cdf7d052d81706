"""Representation of census tracts in online rental listings.

Observed listing counts are compared with a proportional reallocation by
vacant rental inventory, and the resulting ratios are modelled with
fixed-effects OLS and maximum-likelihood spatial regressions.
"""

__version__ = "0.1.0"

from .econometrics import (  # noqa: E402
    ModelFit, ModelSpec, OLSRegressor, SpatialErrorRegressor, SpatialLagRegressor,
    build_design, location_quotient_response, marginal_effects, ols_fit, sar_lag_fit, sem_fit,
)
from .geo import build_index, haversine_km, spatial_join  # noqa: E402
from .metrics import (  # noqa: E402
    affordability_share, expected_counts, gini, representation, representation_table,
    share_comparison,
)
from .spatial import (  # noqa: E402
    WeightsMatrix, distance_decay, morans_i, queen_contiguity, row_standardize,
)
from .stats import cohens_d, contrast_table, density_curve, trim_outliers, welch_t_test  # noqa: E402

__all__ = [
    "ModelFit", "ModelSpec", "OLSRegressor", "SpatialErrorRegressor", "SpatialLagRegressor",
    "WeightsMatrix", "affordability_share", "build_design", "build_index", "cohens_d",
    "contrast_table", "density_curve", "distance_decay", "expected_counts", "gini",
    "haversine_km", "location_quotient_response", "marginal_effects", "morans_i", "ols_fit",
    "queen_contiguity", "representation", "representation_table", "row_standardize",
    "sar_lag_fit", "sem_fit", "share_comparison", "spatial_join", "trim_outliers",
    "welch_t_test",
]
