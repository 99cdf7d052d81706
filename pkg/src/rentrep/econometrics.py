"""Design matrices, OLS, and maximum-likelihood spatial lag / spatial error models.

The estimators at the bottom wrap the functional fits in the scikit-learn
``fit``/``predict`` protocol so they compose with pipelines and
``get_params``/``set_params``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy import linalg, optimize, stats
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .spatial import WeightsMatrix

log = logging.getLogger(__name__)

DCENTER_FLOOR_KM = 0.1
RHO_EPSILON = 1e-5
RHO_XTOL = 1e-8
HESSIAN_STEP = 1e-5

#: Model I predictors in report order; "log" means natural log of the variable
DEFAULT_PREDICTORS: tuple[tuple[str, str], ...] = (
    ("units", "none"),
    ("vacancy", "none"),
    ("sameres", "none"),
    ("dcenter", "log"),
    ("commute", "log"),
    ("bb1940", "none"),
    ("rooms", "none"),
    ("rent", "none"),
    ("income", "log"),
    ("age2034", "none"),
    ("age65up", "none"),
    ("student", "none"),
    ("english", "none"),
    ("hhsize", "log"),
    ("degree", "none"),
    ("white", "none"),
    ("black", "none"),
    ("hispanic", "none"),
)
DEFAULT_INTERACTIONS: tuple[tuple[str, str], ...] = (("white", "income_log"),)


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; dependent columns: {self.columns}")


class NonInteriorMaximumError(RuntimeError):
    pass


def term_name(variable: str, transform: str) -> str:
    return f"{variable}_log" if transform in ("log", "natural_log") else variable


def interaction_name(a: str, b: str) -> str:
    return f"{a}:{b}"


@dataclass(frozen=True)
class ModelSpec:
    response: str = "log_lambda"
    predictors: tuple[tuple[str, str], ...] = DEFAULT_PREDICTORS
    interactions: tuple[tuple[str, str], ...] = DEFAULT_INTERACTIONS
    fixed_effects: bool = True

    def __post_init__(self):
        terms = {term_name(v, t) for v, t in self.predictors}
        for a, b in self.interactions:
            if a not in terms or b not in terms:
                raise ValueError(f"interaction {a}:{b} references a term not in the model")

    @property
    def variables(self) -> list[str]:
        return [v for v, _ in self.predictors]


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    names: list[str]
    tract_ids: list[str]
    city_ids: list[str]
    reference_city: str | None
    excluded: list[tuple[str, str]] = field(default_factory=list)
    floored: list[str] = field(default_factory=list)


def build_design(frame: pd.DataFrame, spec: ModelSpec = ModelSpec()) -> Design:
    """Assemble ``y`` and ``X`` (intercept, terms, interactions, city dummies).

    Tracts with a missing value, or a nonpositive value under a log, are
    excluded and listed in ``Design.excluded``. Distances to the city centre
    are floored at 0.1 km before logging.
    """
    frame = frame.sort_values("tract_id", kind="mergesort").reset_index(drop=True)
    needed = [spec.response, *spec.variables]
    missing_cols = [c for c in needed if c not in frame]
    if missing_cols:
        raise KeyError(f"frame lacks columns {missing_cols}")

    excluded: list[tuple[str, str]] = []
    ok = np.ones(len(frame), dtype=bool)
    for col in needed:
        bad = ~np.isfinite(pd.to_numeric(frame[col], errors="coerce").to_numpy(dtype=float))
        for tid in frame.loc[bad & ok, "tract_id"]:
            excluded.append((tid, f"{col} missing"))
        ok &= ~bad

    floored: list[str] = []
    cols: dict[str, np.ndarray] = {}
    for var, transform in spec.predictors:
        x = frame[var].to_numpy(dtype=float)
        name = term_name(var, transform)
        if name != var:
            if var == "dcenter":
                small = ok & (x < DCENTER_FLOOR_KM)
                floored.extend(frame.loc[small, "tract_id"])
                x = np.maximum(x, DCENTER_FLOOR_KM)
            bad = ok & ~(x > 0)
            for tid in frame.loc[bad, "tract_id"]:
                excluded.append((tid, f"{var} not positive under log"))
            ok &= ~bad
            with np.errstate(divide="ignore", invalid="ignore"):
                x = np.log(x)
        cols[name] = x
    for a, b in spec.interactions:
        cols[interaction_name(a, b)] = cols[a] * cols[b]
    if floored:
        log.debug("dcenter floored at %.1f km for %d tracts", DCENTER_FLOOR_KM, len(floored))
    if excluded:
        log.debug("%d tracts excluded from the design", len(excluded))

    sub = frame.loc[ok]
    names = ["const", *cols]
    X = np.column_stack([np.ones(ok.sum()), *(c[ok] for c in cols.values())])
    cities = sub["city_id"].astype(str).to_numpy() if "city_id" in sub else np.array([])
    reference = None
    if spec.fixed_effects and len(cities):
        levels = sorted(set(cities))
        reference = levels[0]
        dummies = [(cities == c).astype(float) for c in levels[1:]]
        if dummies:
            X = np.column_stack([X, *dummies])
            names += [f"city[{c}]" for c in levels[1:]]
    return Design(
        y=sub[spec.response].to_numpy(dtype=float),
        X=X,
        names=names,
        tract_ids=sub["tract_id"].astype(str).tolist(),
        city_ids=list(cities),
        reference_city=reference,
        excluded=excluded,
        floored=floored,
    )


@dataclass
class ModelFit:
    """Estimates and diagnostics of one regression.

    ``k`` counts every estimated parameter: coefficients, ``sigma2`` and the
    spatial parameter when there is one.
    """

    model: str
    names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray | None
    sigma2: float
    log_likelihood: float
    n: int
    k: int
    residuals: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    df_resid: float | None = None
    r2: float | None = None
    pseudo_r2: float | None = None
    rho: float | None = None
    rho_se: float | None = None
    error_lambda: float | None = None
    error_lambda_se: float | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def aic(self) -> float:
        return 2 * self.k - 2 * self.log_likelihood

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(self.names, self.coefficients))

    @property
    def p_values(self) -> np.ndarray | None:
        if self.standard_errors is None:
            return None
        z = np.abs(self.coefficients / self.standard_errors)
        if self.df_resid is not None:
            return 2 * stats.t.sf(z, self.df_resid)
        return 2 * stats.norm.sf(z)

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float | None:
        if self.standard_errors is None:
            return None
        return float(self.standard_errors[self.names.index(name)])

    def significant(self, name: str, alpha: float = 0.05) -> bool | None:
        p = self.p_values
        return None if p is None else bool(p[self.names.index(name)] < alpha)

    def spatial_parameter(self) -> tuple[str, float, float | None] | None:
        if self.rho is not None:
            return "rho", self.rho, self.rho_se
        if self.error_lambda is not None:
            return "lambda", self.error_lambda, self.error_lambda_se
        return None

    def report_rows(self, alpha: float = 0.05) -> list[dict]:
        rows = []
        sp_ = self.spatial_parameter()
        if sp_ is not None:
            name, est, se = sp_
            p = None if se is None else float(2 * stats.norm.sf(abs(est / se)))
            rows.append({"term": name, "estimate": est, "se": se, "p": p,
                         "significant": None if p is None else p < alpha})
        pv = self.p_values
        for i, name in enumerate(self.names):
            rows.append({
                "term": name,
                "estimate": float(self.coefficients[i]),
                "se": None if self.standard_errors is None else float(self.standard_errors[i]),
                "p": None if pv is None else float(pv[i]),
                "significant": None if pv is None else bool(pv[i] < alpha),
            })
        return rows

    def diagnostics(self) -> dict:
        out = {
            "model": self.model, "n": self.n, "k": self.k,
            "aic": self.aic, "log_likelihood": self.log_likelihood, "sigma2": self.sigma2,
        }
        if self.r2 is not None:
            out["r2"] = self.r2
        if self.pseudo_r2 is not None:
            out["pseudo_r2"] = self.pseudo_r2
        if self.rho is not None:
            out["rho"] = self.rho
        if self.error_lambda is not None:
            out["lambda"] = self.error_lambda
        return out


class _LeastSquares:
    """Pivoted QR of a design, reused to project several responses."""

    def __init__(self, X: np.ndarray, names: Sequence[str] | None = None):
        X = np.asarray(X, dtype=float)
        n, p = X.shape
        if n <= p:
            raise ValueError(f"need more observations ({n}) than columns ({p})")
        names = list(names) if names is not None else [f"x{i}" for i in range(p)]
        scale = np.sqrt((X * X).sum(axis=0))
        scale[scale == 0] = 1.0
        q, r, piv = linalg.qr(X / scale, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = max(n, p) * np.finfo(float).eps * diag[0] * 1e3
        rank = int(np.sum(diag > tol))
        if rank < p:
            raise RankDeficientError([names[j] for j in sorted(piv[rank:])])
        self.X, self.q, self.r, self.piv, self.scale = X, q, r, piv, scale

    def coef(self, y: np.ndarray) -> np.ndarray:
        z = linalg.solve_triangular(self.r, self.q.T @ y)
        beta = np.empty_like(z)
        beta[self.piv] = z
        return beta / self.scale

    def xtx_inv(self) -> np.ndarray:
        rinv = linalg.solve_triangular(self.r, np.eye(self.r.shape[0]))
        cov_p = rinv @ rinv.T
        cov = np.empty_like(cov_p)
        cov[np.ix_(self.piv, self.piv)] = cov_p
        return cov / np.outer(self.scale, self.scale)


def _gaussian_loglik(rss: float, n: int) -> float:
    return -0.5 * n * (math.log(2 * math.pi) + math.log(rss / n) + 1)


def ols_fit(y, X, names: Sequence[str] | None = None) -> ModelFit:
    """Ordinary least squares through a column-pivoted QR factorization."""
    y = np.asarray(y, dtype=float).ravel()
    ls = _LeastSquares(X, names)
    n, p = ls.X.shape
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    beta = ls.coef(y)
    fitted = ls.X @ beta
    e = y - fitted
    rss = float(e @ e)
    sigma2 = rss / (n - p)
    se = np.sqrt(np.diag(ls.xtx_inv()) * sigma2)
    tss = float(((y - y.mean()) ** 2).sum())
    return ModelFit(
        model="ols", names=names, coefficients=beta, standard_errors=se,
        sigma2=sigma2, log_likelihood=_gaussian_loglik(rss, n) if rss > 0 else math.inf,
        n=n, k=p + 1, residuals=e, fitted=fitted, df_resid=n - p,
        r2=1 - rss / tss if tss > 0 else float("nan"),
    )


def _weights_matrix(w) -> sp.csr_matrix:
    return w.matrix if isinstance(w, WeightsMatrix) else sp.csr_matrix(w, dtype=float)


def _as_sparse(w) -> tuple[sp.csr_matrix, np.ndarray]:
    if isinstance(w, WeightsMatrix):
        return w.matrix, w.eigenvalues
    m = sp.csr_matrix(w, dtype=float)
    return m, np.sort(np.linalg.eigvals(m.toarray()).real)


def _rho_bounds(omega: np.ndarray, eps: float) -> tuple[float, float]:
    wmin, wmax = omega.min(), omega.max()
    if not (wmin < 0 < wmax):
        raise ValueError("weights spectrum must contain negative and positive eigenvalues")
    return 1 / wmin + eps, 1 / wmax - eps


def _logdet(rho: float, omega: np.ndarray) -> float:
    return float(np.sum(np.log1p(-rho * omega)))


def _hessian(score, theta: np.ndarray, step: float = HESSIAN_STEP) -> np.ndarray:
    """Central-difference Jacobian of an analytic score, symmetrized."""
    p = theta.size
    h = step * (np.abs(theta) + 1e-3)
    hess = np.empty((p, p))
    for j in range(p):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h[j]
        tm[j] -= h[j]
        hess[:, j] = (score(tp) - score(tm)) / (2 * h[j])
    return 0.5 * (hess + hess.T)


def _covariance(hess: np.ndarray) -> np.ndarray | None:
    try:
        cov = linalg.inv(-hess)
    except linalg.LinAlgError:
        return None
    d = np.diag(cov)
    if not np.all(np.isfinite(cov)) or np.any(d <= 0):
        return None
    return cov


def _maximize(conc, lo: float, hi: float, xtol: float) -> float:
    res = optimize.minimize_scalar(
        lambda r: -conc(r), bounds=(lo, hi), method="bounded",
        options={"xatol": xtol, "maxiter": 500},
    )
    r = float(res.x)
    edge = 10 * xtol + 1e-9
    if r - lo < edge or hi - r < edge:
        raise NonInteriorMaximumError(
            f"likelihood maximum at interval endpoint ({r:.6f} in [{lo:.6f}, {hi:.6f}])"
        )
    return r


def sar_lag_fit(
    y,
    X,
    w,
    names: Sequence[str] | None = None,
    rho: float | None = None,
    epsilon: float = RHO_EPSILON,
    xtol: float = RHO_XTOL,
) -> ModelFit:
    """Spatial lag model ``y = rho W y + X beta + e`` by maximum likelihood.

    The likelihood is concentrated on ``rho`` using the residuals of ``y``
    and ``Wy`` on ``X`` and the log-determinant ``sum(log(1 - rho*omega))``
    over the cached spectrum of ``W``. Standard errors come from a numerical
    Hessian of the full log-likelihood in ``(rho, beta, sigma2)``.

    Parameters
    ----------
    y : array_like, shape (n,)
    X : array_like, shape (n, p)
        Design including the intercept column.
    w : WeightsMatrix or sparse matrix
        Row-standardized spatial weights aligned with the rows of ``X``.
    rho : float, optional
        Hold the autoregressive coefficient fixed instead of estimating it.
    """
    y = np.asarray(y, dtype=float).ravel()
    W, omega = _as_sparse(w)
    ls = _LeastSquares(X, names)
    Xa = ls.X
    n, p = Xa.shape
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    if W.shape != (n, n):
        raise ValueError("weights do not match the number of observations")
    wy = W @ y
    b_o, b_l = ls.coef(y), ls.coef(wy)
    e_o, e_l = y - Xa @ b_o, wy - Xa @ b_l

    def conc(r):
        e = e_o - r * e_l
        return -0.5 * n * math.log(e @ e / n) + _logdet(r, omega)

    if rho is None:
        lo, hi = _rho_bounds(omega, epsilon)
        r_hat = _maximize(conc, lo, hi, xtol)
    else:
        r_hat = float(rho)
    beta = b_o - r_hat * b_l
    e = y - r_hat * wy - Xa @ beta
    sigma2 = float(e @ e / n)
    loglik = conc(r_hat) - 0.5 * n * (math.log(2 * math.pi) + 1)

    def score(theta):
        r, b, s2 = theta[0], theta[1:-1], theta[-1]
        u = y - r * wy - Xa @ b
        g_r = -np.sum(omega / (1 - r * omega)) + (wy @ u) / s2
        g_b = Xa.T @ u / s2
        g_s = -0.5 * n / s2 + 0.5 * (u @ u) / s2**2
        return np.concatenate([[g_r], g_b, [g_s]])

    fit_warnings = []
    theta = np.concatenate([[r_hat], beta, [sigma2]])
    if rho is None:
        cov = _covariance(_hessian(score, theta))
        idx = slice(1, p + 1)
    else:
        cov = _covariance(_hessian(lambda t: score(np.concatenate([[r_hat], t]))[1:], theta[1:]))
        idx = slice(0, p)
    if cov is None:
        msg = "Hessian is singular; standard errors unavailable"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        fit_warnings.append(msg)
        se, rho_se = None, None
    else:
        sds = np.sqrt(np.diag(cov))
        se = sds[idx]
        rho_se = float(sds[0]) if rho is None else None

    a = (sp.identity(n, format="csc") - r_hat * W.tocsc())
    yhat = splu(a).solve(Xa @ beta)
    pseudo = float(np.corrcoef(y, yhat)[0, 1] ** 2)
    return ModelFit(
        model="sar_lag", names=names, coefficients=beta, standard_errors=se,
        sigma2=sigma2, log_likelihood=loglik, n=n,
        k=p + 1 + (1 if rho is None else 0),
        residuals=e, fitted=y - e, pseudo_r2=pseudo, rho=r_hat, rho_se=rho_se,
        warnings=fit_warnings,
    )


def sem_fit(
    y,
    X,
    w,
    names: Sequence[str] | None = None,
    epsilon: float = RHO_EPSILON,
    xtol: float = RHO_XTOL,
) -> ModelFit:
    """Spatial error model ``y = X beta + u``, ``u = lambda W u + e``, by ML.

    For each ``lambda`` the coefficients are the least-squares fit of
    ``(I - lambda W) y`` on ``(I - lambda W) X``. A weights matrix without
    links carries no spatial information, and the fit reduces to OLS.
    """
    y = np.asarray(y, dtype=float).ravel()
    W = _weights_matrix(w)
    Xa = np.asarray(X, dtype=float)
    n, p = Xa.shape
    names = list(names) if names is not None else [f"x{i}" for i in range(p)]
    if W.nnz == 0:
        fit = ols_fit(y, Xa, names)
        fit.model, fit.error_lambda = "sem", 0.0
        fit.warnings.append("weights have no links; spatial error fit reduces to OLS")
        return fit
    _, omega = _as_sparse(w)
    _LeastSquares(Xa, names)  # rank check on the untransformed design
    wy, wx = W @ y, W @ Xa

    def solve(lam):
        ys, xs = y - lam * wy, Xa - lam * wx
        b = np.linalg.lstsq(xs, ys, rcond=None)[0]
        return b, ys - xs @ b

    def conc(lam):
        _, e = solve(lam)
        return -0.5 * n * math.log(e @ e / n) + _logdet(lam, omega)

    lo, hi = _rho_bounds(omega, epsilon)
    lam = _maximize(conc, lo, hi, xtol)
    beta, e = solve(lam)
    sigma2 = float(e @ e / n)
    loglik = conc(lam) - 0.5 * n * (math.log(2 * math.pi) + 1)

    def score(theta):
        l_, b, s2 = theta[0], theta[1:-1], theta[-1]
        u = y - Xa @ b
        wu = W @ u
        v = u - l_ * wu
        g_l = -np.sum(omega / (1 - l_ * omega)) + (wu @ v) / s2
        g_b = (Xa - l_ * wx).T @ v / s2
        g_s = -0.5 * n / s2 + 0.5 * (v @ v) / s2**2
        return np.concatenate([[g_l], g_b, [g_s]])

    cov = _covariance(_hessian(score, np.concatenate([[lam], beta, [sigma2]])))
    fit_warnings = []
    if cov is None:
        msg = "Hessian is singular; standard errors unavailable"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        fit_warnings.append(msg)
        se, lam_se = None, None
    else:
        sds = np.sqrt(np.diag(cov))
        se, lam_se = sds[1:p + 1], float(sds[0])
    xb = Xa @ beta
    return ModelFit(
        model="sem", names=names, coefficients=beta, standard_errors=se,
        sigma2=sigma2, log_likelihood=loglik, n=n, k=p + 2,
        residuals=y - xb, fitted=xb, pseudo_r2=float(np.corrcoef(y, xb)[0, 1] ** 2),
        error_lambda=lam, error_lambda_se=lam_se, warnings=fit_warnings,
    )


@dataclass(frozen=True)
class MarginalEffect:
    """Derivative of the response with respect to ``focal`` at a moderator value.

    With a logged response, ``effect`` is an elasticity (percent per percent)
    for a logged focal term and a semi-elasticity per unit otherwise;
    ``per_point`` rescales a proportion's per-unit effect to one percentage
    point (a log change, multiply by 100 for percent).
    """

    focal: str
    moderator: str | None
    moderator_value: float | None
    effect: float

    @property
    def per_point(self) -> float:
        return self.effect / 100


def marginal_effects(
    fit: ModelFit | Mapping[str, float],
    focal: str,
    moderator: str | None = None,
    values: Sequence[float] = (),
) -> list[MarginalEffect]:
    """``d y / d focal = b_focal + b_interaction * moderator`` at each value.

    ``fit`` may also be a plain ``{term: coefficient}`` mapping.
    """
    params = fit.params if isinstance(fit, ModelFit) else dict(fit)
    if focal not in params:
        raise KeyError(f"{focal!r} is not a model term")
    base = params[focal]
    if moderator is None:
        return [MarginalEffect(focal, None, None, base)]
    inter = None
    for name in (interaction_name(focal, moderator), interaction_name(moderator, focal)):
        if name in params:
            inter = params[name]
    if inter is None:
        raise KeyError(f"no interaction between {focal!r} and {moderator!r}")
    return [MarginalEffect(focal, moderator, float(m), base + inter * float(m)) for m in values]


def location_quotient_response(kappa, tau, city_ids, smoothing: float = 1.0) -> np.ndarray:
    """Log location quotient of listings to vacancies within each city.

    ``smoothing`` is added to every count and city total so that tracts
    without listings keep a finite log.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    kappa = np.asarray(kappa, dtype=float)
    tau = np.asarray(tau, dtype=float)
    city_ids = np.asarray(city_ids)
    a = smoothing
    out = np.empty_like(kappa)
    for c in np.unique(city_ids):
        m = city_ids == c
        k_c, t_c = kappa[m].sum(), tau[m].sum()
        with np.errstate(divide="ignore"):
            out[m] = np.log((kappa[m] + a) / (k_c + a)) - np.log((tau[m] + a) / (t_c + a))
    return out


# --- scikit-learn estimators -------------------------------------------------


class _LinearModel(RegressorMixin, BaseEstimator):
    def _prepare(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        names = list(getattr(self, "feature_names_in_", [f"x{i}" for i in range(X.shape[1])]))
        if self.fit_intercept:
            X = np.column_stack([np.ones(len(X)), X])
            names = ["const", *names]
        return X, y, names

    def _store(self, fit: ModelFit):
        self.fit_ = fit
        beta = fit.coefficients
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(beta[0]), beta[1:].copy()
        else:
            self.intercept_, self.coef_ = 0.0, beta.copy()
        return self

    def _linear(self, X):
        check_is_fitted(self, "fit_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_ + self.intercept_


class OLSRegressor(_LinearModel):
    """Least squares with classical standard errors and likelihood diagnostics."""

    def __init__(self, fit_intercept: bool = True):
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        Xa, y, names = self._prepare(X, y)
        return self._store(ols_fit(y, Xa, names))

    def predict(self, X):
        return self._linear(X)


class SpatialLagRegressor(_LinearModel):
    """Maximum-likelihood spatial lag regression.

    Parameters
    ----------
    weights : WeightsMatrix
        Row-standardized weights aligned with the training rows.
    epsilon : float
        Margin kept from the ends of the admissible ``rho`` interval.
    """

    def __init__(self, weights=None, fit_intercept: bool = True, epsilon: float = RHO_EPSILON):
        self.weights = weights
        self.fit_intercept = fit_intercept
        self.epsilon = epsilon

    def fit(self, X, y):
        if self.weights is None:
            raise ValueError("SpatialLagRegressor needs a weights matrix")
        Xa, y, names = self._prepare(X, y)
        fit = sar_lag_fit(y, Xa, self.weights, names, epsilon=self.epsilon)
        self.rho_ = fit.rho
        return self._store(fit)

    def predict(self, X):
        """Reduced-form prediction ``(I - rho W)^-1 X beta`` on the training
        geography; other row counts get the trend ``X beta`` only."""
        xb = self._linear(X)
        W = _weights_matrix(self.weights)
        if W.shape[0] != len(xb):
            return xb
        a = sp.identity(len(xb), format="csc") - self.rho_ * W.tocsc()
        return splu(a).solve(xb)


class SpatialErrorRegressor(_LinearModel):
    def __init__(self, weights=None, fit_intercept: bool = True, epsilon: float = RHO_EPSILON):
        self.weights = weights
        self.fit_intercept = fit_intercept
        self.epsilon = epsilon

    def fit(self, X, y):
        if self.weights is None:
            raise ValueError("SpatialErrorRegressor needs a weights matrix")
        Xa, y, names = self._prepare(X, y)
        fit = sem_fit(y, Xa, self.weights, names, epsilon=self.epsilon)
        self.lambda_ = fit.error_lambda
        return self._store(fit)

    def predict(self, X):
        return self._linear(X)


__all__ = [
    "DEFAULT_PREDICTORS", "DEFAULT_INTERACTIONS", "ModelSpec", "Design", "ModelFit",
    "MarginalEffect", "RankDeficientError", "NonInteriorMaximumError",
    "build_design", "ols_fit", "sar_lag_fit", "sem_fit", "marginal_effects",
    "location_quotient_response", "OLSRegressor", "SpatialLagRegressor",
    "SpatialErrorRegressor",
]
