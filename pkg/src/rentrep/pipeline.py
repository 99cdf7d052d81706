"""Configuration, stage orchestration and report writing for the CLI."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import operator
import os
import re
import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .econometrics import (
    build_design, location_quotient_response, marginal_effects, ols_fit, sar_lag_fit,
)
from .geo import build_index, spatial_join, write_join_report, write_kappa
from .ingest import (
    IngestError, ValidationError, VARIABLES, derive_all, filter_universe, load_cities,
    load_listings, load_tracts,
)
from .metrics import (
    affordability_share, class_by_majority, gini_reports, representation_table,
    share_comparison,
)
from .robustness import run_robustness, stability, variant_grid
from .spatial import distance_decay, morans_i, queen_contiguity, row_standardize, write_weights
from .stats import contrast_table, density_curve

log = logging.getLogger(__name__)

STAGES = ("ingest", "join", "analyze", "model", "robustness")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DENSITY_VARIABLES = ("income", "rent", "white", "black", "hispanic", "degree",
                     "english", "poverty", "student", "burden")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


class DataError(RuntimeError):
    """Input data problem detected while running a stage."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


@dataclass
class RobustnessConfig:
    outlier_k: list = field(default_factory=lambda: [None, 2, 3])
    responses: list = field(default_factory=lambda: ["lambda", "lq"])
    min_listings: list = field(default_factory=lambda: [0, 5, 10])
    weights: list = field(default_factory=lambda: ["queen", "distance_decay"])
    errors: list = field(default_factory=lambda: ["none", "spatial_error"])


@dataclass
class PipelineConfig:
    tracts: str
    attributes: str
    listings: str
    cities: str
    output: str = "out"
    ttest: str = "welch"
    contrast_outlier_k: list = field(default_factory=lambda: [2, 3])
    decay_cutoff_km: float = 10.0
    decay_alpha: float = 1.0
    lq_smoothing: float = 1.0
    predicates: list = field(default_factory=lambda: [
        "income > 55", "majority == white", "majority == black", "majority == hispanic",
        "degree > 0.5", "poverty > 0.2",
    ])
    affordability_incomes: list = field(default_factory=lambda: [53657])
    contrast_variables: list = field(default_factory=lambda: [v for v in VARIABLES])
    seed: int = 0
    threads: int = 1
    cities_filter: list = field(default_factory=list)
    robustness: RobustnessConfig = field(default_factory=RobustnessConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


_TOP_KEYS = {"inputs", "output", "ttest", "contrast_outlier_k", "distance_decay", "predicates",
             "affordability_incomes", "contrast_variables", "seed", "threads", "cities",
             "robustness", "lq_smoothing"}
_INPUT_KEYS = ("tracts", "attributes", "listings", "cities")
_PRED_RE = re.compile(r"^\s*(\w+)\s*(==|!=|>=|<=|>|<)\s*([\w.+-]+)\s*$")
_OPS = {"==": operator.eq, "!=": operator.ne, ">=": operator.ge, "<=": operator.le,
        ">": operator.gt, "<": operator.lt}


def _nonneg_list(value, key, errors, allow_null=False):
    if not isinstance(value, list):
        errors.append(f"{key}: expected a list")
        return value
    for v in value:
        if v is None and allow_null:
            continue
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
            errors.append(f"{key}: {v!r} must be a nonnegative number")
    return value


def validate_config(source, base_dir: str | Path | None = None,
                    check_paths: bool = True) -> PipelineConfig:
    """Parse and validate a config mapping or YAML file.

    All problems are collected and raised together as :class:`ConfigError`.
    Relative input paths resolve against the config file's directory.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
        base_dir = path.parent if base_dir is None else base_dir
    else:
        doc = dict(source)
    base = Path(base_dir or ".").resolve()
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a mapping"])
    for key in sorted(set(doc) - _TOP_KEYS):
        errors.append(f"unknown key: {key}")

    inputs = doc.get("inputs") or {}
    if not isinstance(inputs, dict):
        errors.append("inputs: expected a mapping")
        inputs = {}
    for key in sorted(set(inputs) - set(_INPUT_KEYS)):
        errors.append(f"unknown key: inputs.{key}")
    resolved = {}
    for key in _INPUT_KEYS:
        if key not in inputs:
            errors.append(f"inputs.{key}: required")
            continue
        p = Path(str(inputs[key]))
        p = p if p.is_absolute() else base / p
        if check_paths and not p.is_file():
            errors.append(f"inputs.{key}: file not found: {p}")
        resolved[key] = str(p)

    kw: dict[str, Any] = {}
    if "output" in doc:
        out = Path(str(doc["output"]))
        kw["output"] = str(out if out.is_absolute() else base / out)
    else:
        kw["output"] = str(base / "out")
    if "ttest" in doc:
        if doc["ttest"] not in ("welch", "student"):
            errors.append("ttest: must be 'welch' or 'student'")
        kw["ttest"] = doc["ttest"]
    if "contrast_outlier_k" in doc:
        kw["contrast_outlier_k"] = _nonneg_list(doc["contrast_outlier_k"],
                                                "contrast_outlier_k", errors)
    if "distance_decay" in doc:
        dd = doc["distance_decay"] or {}
        for key in sorted(set(dd) - {"cutoff_km", "alpha"}):
            errors.append(f"unknown key: distance_decay.{key}")
        for key, attr in (("cutoff_km", "decay_cutoff_km"), ("alpha", "decay_alpha")):
            if key in dd:
                v = dd[key]
                if not isinstance(v, (int, float)) or v <= 0:
                    errors.append(f"distance_decay.{key}: must be positive")
                kw[attr] = v
    if "lq_smoothing" in doc:
        v = doc["lq_smoothing"]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
            errors.append("lq_smoothing: must be a nonnegative number")
        kw["lq_smoothing"] = v
    if "predicates" in doc:
        for p in doc["predicates"]:
            if not isinstance(p, str) or not _PRED_RE.match(p):
                errors.append(f"predicates: cannot parse {p!r}")
        kw["predicates"] = list(doc["predicates"])
    if "affordability_incomes" in doc:
        incomes = doc["affordability_incomes"]
        _nonneg_list(incomes, "affordability_incomes", errors)
        if isinstance(incomes, list) and any(
                isinstance(v, (int, float)) and v == 0 for v in incomes):
            errors.append("affordability_incomes: values must be positive")
        kw["affordability_incomes"] = incomes
    if "contrast_variables" in doc:
        bad = [v for v in doc["contrast_variables"] if v not in VARIABLES]
        if bad:
            errors.append(f"contrast_variables: unknown variables {bad}")
        kw["contrast_variables"] = list(doc["contrast_variables"])
    for key in ("seed", "threads"):
        if key in doc:
            v = doc[key]
            if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "seed" else 1):
                errors.append(f"{key}: must be an integer >= {0 if key == 'seed' else 1}")
            kw[key] = v
    if "cities" in doc:
        kw["cities_filter"] = [str(c) for c in doc["cities"]]

    rob = RobustnessConfig()
    if "robustness" in doc:
        rdoc = doc["robustness"] or {}
        for key in sorted(set(rdoc) - set(asdict(rob))):
            errors.append(f"unknown key: robustness.{key}")
        if "outlier_k" in rdoc:
            rob.outlier_k = _nonneg_list(rdoc["outlier_k"], "robustness.outlier_k", errors,
                                         allow_null=True)
        if "min_listings" in rdoc:
            rob.min_listings = _nonneg_list(rdoc["min_listings"], "robustness.min_listings",
                                            errors)
        for key, allowed in (("responses", {"lambda", "lq"}),
                             ("weights", {"queen", "distance_decay"}),
                             ("errors", {"none", "spatial_error"})):
            if key in rdoc:
                bad = [v for v in rdoc[key] if v not in allowed]
                if bad:
                    errors.append(f"robustness.{key}: unknown values {bad}")
                setattr(rob, key, list(rdoc[key]))
    kw["robustness"] = rob

    if errors:
        raise ConfigError(errors)
    return PipelineConfig(**resolved, **kw)


def parse_predicate(text: str):
    m = _PRED_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse predicate {text!r}")
    col, op, raw = m.groups()
    try:
        value: Any = float(raw)
    except ValueError:
        value = raw

    def pred(df: pd.DataFrame) -> np.ndarray:
        series = df[col]
        mask = _OPS[op](series, value)
        return (mask & series.notna()).to_numpy(dtype=bool)

    return pred


# --- formatting ---------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return f"{float(v):.6g}"
    return str(v)


def write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) or math.isinf(v) else v
    return v


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _records(df: pd.DataFrame) -> list[dict]:
    return [dict(zip(df.columns, row)) for row in df.itertuples(index=False, name=None)]


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _WarningCollector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(f"{record.name}: {record.getMessage()}")


# --- stages -------------------------------------------------------------------


@dataclass
class RunState:
    config: PipelineConfig
    out: Path
    counts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    tracts: list = field(default_factory=list)
    listings: list = field(default_factory=list)
    assignments: dict = field(default_factory=dict)
    frame: pd.DataFrame | None = None
    table: pd.DataFrame | None = None
    queen: Any = None
    decay: Any = None


def stage_ingest(st: RunState) -> None:
    cfg = st.config
    try:
        loaded = load_tracts(cfg.tracts, cfg.attributes)
        cities = load_cities(cfg.cities, loaded.records)
        records = loaded.records
        if cfg.cities_filter:
            records = [r for r in records if r.city_id in cfg.cities_filter]
        derived = derive_all(records, cities)
        listings = load_listings(cfg.listings)
    except (IngestError, ValidationError, OSError) as exc:
        raise DataError("ingest", str(exc)) from exc
    retained, exclusions = filter_universe(derived)
    if not retained:
        raise DataError("ingest", "no tracts retained")
    st.tracts, st.listings = retained, listings
    rows = [t.as_row() | {"complete": t.complete} for t in retained]
    cols = ["tract_id", "city_id", "land_area_km2", "centroid_lon", "centroid_lat", "tau",
            *VARIABLES, "complete"]
    write_csv(st.out / "tracts.csv", rows, cols)
    write_csv(st.out / "exclusions.csv",
              [{"tract_id": e.tract_id, "reason": e.reason} for e in exclusions]
              + [{"tract_id": t, "reason": "geometry without attributes"}
                 for t in loaded.unmatched_geometries]
              + [{"tract_id": t, "reason": "attributes without geometry"}
                 for t in loaded.unmatched_attributes],
              ["tract_id", "reason"])
    st.counts.update(tracts_loaded=len(loaded.records), tracts_retained=len(retained),
                     tracts_excluded=len(exclusions), listings=len(listings),
                     tracts_incomplete=sum(not t.complete for t in retained))


def stage_join(st: RunState) -> None:
    index = build_index(st.tracts)
    result = spatial_join(st.listings, index)
    write_join_report(st.out / "join_report.csv", st.listings, result)
    write_kappa(st.out / "kappa.csv", result)
    st.assignments = result.assignments
    frame = pd.DataFrame([t.as_row() for t in st.tracts])
    frame["kappa"] = frame["tract_id"].map(result.kappa).astype(int)
    st.frame = frame.sort_values("tract_id").reset_index(drop=True)
    st.counts.update(listings_matched=len(result.assignments),
                     listings_unmatched=len(result.unmatched),
                     boundary_ties=len(result.ties))


def stage_analyze(st: RunState) -> None:
    cfg, frame = st.config, st.frame
    table, errors = representation_table(frame)
    for err in errors:
        log.warning("city %s excluded from representation: %s", err["city_id"], err["error"])
    if table.empty:
        raise DataError("analyze", "no city has vacant rental units")
    st.table = table
    rep_cols = ["tract_id", "city_id", "kappa", "phi", "lambda", "log_lambda", "class",
                "very_under", "majority"]
    write_csv(st.out / "representation.csv", _records(table[rep_cols]), rep_cols)
    write_json(st.out / "representation.json", {"rows": _records(table[rep_cols])})

    gini_rows = [asdict(g) | {"ratio_pct_difference": g.ratio_pct_difference}
                 for g in gini_reports(table)]
    gcols = ["city_id", "n_tracts", "gini_observed", "gini_expected", "ratio_pct_difference"]
    write_csv(st.out / "gini.csv", gini_rows, gcols)
    ct = class_by_majority(table)
    write_csv(st.out / "class_by_majority.csv", _records(ct), list(ct.columns))

    merged = frame.drop(columns=["kappa"]).merge(
        table[["tract_id", "kappa", "phi", "lambda", "log_lambda", "class", "majority"]],
        on="tract_id")
    st.frame = merged
    equal_var = cfg.ttest == "student"
    ccols = ["variable", "city_id", "n_over", "n_under", "mean_over", "mean_under", "delta",
             "cohen_d", "t_statistic", "df", "p_value", "significant_at_05", "magnitude", "flag"]
    national = contrast_table(merged, cfg.contrast_variables, "national", equal_var)
    write_csv(st.out / "contrasts_national.csv", [r.as_dict() for r in national], ccols)
    per_city = contrast_table(merged, cfg.contrast_variables, "city", equal_var)
    write_csv(st.out / "contrasts_city.csv", [r.as_dict() for r in per_city], ccols)
    for k in cfg.contrast_outlier_k:
        trimmed = contrast_table(merged, cfg.contrast_variables, "national", equal_var, trim_k=k)
        write_csv(st.out / f"contrasts_national_trim{k:g}.csv",
                  [r.as_dict() for r in trimmed], ccols)

    dens_rows = []
    for var in [v for v in DENSITY_VARIABLES if v in merged]:
        for group in ("over", "under"):
            sample = merged.loc[merged["class"] == group, var].dropna()
            try:
                curve = density_curve(sample, var, group)
            except ValueError as exc:
                log.warning("no density for %s/%s: %s", var, group, exc)
                continue
            dens_rows += [{"variable": var, "group": group, "x": x, "density": d}
                          for x, d in zip(curve.grid, curve.density)]
    write_csv(st.out / "density.csv", dens_rows, ["variable", "group", "x", "density"])

    share_rows = []
    for text in cfg.predicates:
        exp_, obs = share_comparison(merged, parse_predicate(text)(merged))
        share_rows.append({"predicate_name": text, "expected": exp_, "observed": obs})
    write_csv(st.out / "shares.csv", share_rows, ["predicate_name", "expected", "observed"])

    rents = [lst.rent for lst in st.listings if lst.listing_id in st.assignments]
    afford = [{"annual_income": inc, "share_affordable": affordability_share(rents, inc),
               "n_listings": len(rents)} for inc in cfg.affordability_incomes]
    write_csv(st.out / "affordability.csv", afford,
              ["annual_income", "share_affordable", "n_listings"])
    st.counts.update(representation_rows=len(table),
                     cities_excluded=len(errors))


def _model_frame(st: RunState) -> pd.DataFrame:
    frame = st.frame.copy()
    frame["log_lq"] = location_quotient_response(frame["kappa"], frame["tau"], frame["city_id"],
                                                 st.config.lq_smoothing)
    return frame


def _weights(st: RunState, ids: list[str]):
    geoms = {t.tract_id: t.geometry for t in st.tracts}
    if st.queen is None:
        st.queen = row_standardize(queen_contiguity({t: geoms[t] for t in ids}))
    return st.queen


def write_model_report(out: Path, stem: str, fit) -> None:
    rows = fit.report_rows()
    write_csv(out / f"{stem}.csv", rows, ["term", "estimate", "se", "p", "significant"])
    write_json(out / f"{stem}.json", {"terms": rows, "diagnostics": fit.diagnostics(),
                                      "warnings": fit.warnings})


def stage_model(st: RunState) -> None:
    frame = _model_frame(st)
    design = build_design(frame)
    if len(design.y) <= design.X.shape[1]:
        raise DataError("model", "too few complete tracts for the regression")
    ols = ols_fit(design.y, design.X, design.names)
    write_model_report(st.out, "model_I", ols)

    queen = _weights(st, sorted(frame["tract_id"]))
    w = queen.subset(design.tract_ids)
    write_weights(st.out / "weights_queen.txt", w)
    moran = morans_i(ols.residuals, w)
    write_csv(st.out / "moran.csv", [asdict(moran) | {"model": "model_I"}],
              ["model", "I", "expected", "variance", "z", "p_value", "n"])
    sar = sar_lag_fit(design.y, design.X, w, design.names)
    write_model_report(st.out, "model_II", sar)

    me_rows = []
    if "white:income_log" in ols.names:
        for m in marginal_effects(ols, "income_log", "white", [0.1, 0.25, 0.5, 0.75, 0.9]):
            me_rows.append({"focal": m.focal, "moderator": m.moderator,
                            "moderator_value": m.moderator_value, "effect": m.effect,
                            "percent": m.effect})
        for inc in (8, 25, 50, 100):
            (m,) = marginal_effects(ols, "white", "income_log", [math.log(inc)])
            me_rows.append({"focal": m.focal, "moderator": "income_log",
                            "moderator_value": m.moderator_value, "effect": m.effect,
                            "percent": m.effect})
    write_csv(st.out / "marginal_effects.csv", me_rows,
              ["focal", "moderator", "moderator_value", "effect", "percent"])
    write_csv(st.out / "design_exclusions.csv",
              [{"tract_id": t, "reason": r} for t, r in design.excluded]
              + [{"tract_id": t, "reason": "dcenter floored"} for t in design.floored],
              ["tract_id", "reason"])
    st.counts.update(model_n=ols.n, model_k=ols.k, design_excluded=len(design.excluded))


def stage_robustness(st: RunState) -> None:
    cfg = st.config
    frame = _model_frame(st)
    ids = sorted(frame["tract_id"])
    queen = _weights(st, ids)
    cent = frame.set_index("tract_id").loc[ids, ["centroid_lon", "centroid_lat"]].to_numpy()
    decay = row_standardize(distance_decay(ids, cent, cfg.decay_cutoff_km, cfg.decay_alpha))
    rc = cfg.robustness
    variants = variant_grid(rc.outlier_k, rc.responses, rc.min_listings, rc.weights, rc.errors)
    report = run_robustness(frame, {"queen": queen, "distance_decay": decay}, variants,
                            threads=cfg.threads)
    cols = ["variant", "term", "estimate", "se", "sign", "significant", "n", "status"]
    write_csv(st.out / "robustness.csv", _records(report[cols]), cols)
    summary = stability(report)
    write_csv(st.out / "robustness_summary.csv", _records(summary), list(summary.columns))
    st.counts.update(robustness_variants=len(variants),
                     robustness_failed=int((report["status"] != "ok").sum()
                                           if "status" in report else 0))


_STAGE_FUNCS = {"ingest": stage_ingest, "join": stage_join, "analyze": stage_analyze,
                "model": stage_model, "robustness": stage_robustness}


def run_pipeline(config: PipelineConfig, through: str = "robustness") -> dict:
    """Run stages up to and including ``through`` and write their reports.

    Output goes to a staging directory that replaces ``config.output`` only
    when every stage succeeds, so a failed run leaves no partial output. A
    ``<output>.lock`` file guards the directory against concurrent runs.
    """
    if through not in STAGES:
        raise ValueError(f"unknown stage {through!r}")
    out = Path(config.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    lock = out.parent / f"{out.name}.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise DataError("setup", f"output directory is locked by {lock}") from exc
    os.close(fd)
    staging = out.parent / f".{out.name}.staging"
    collector = _WarningCollector()
    pkg_log = logging.getLogger("rentrep")
    pkg_log.addHandler(collector)
    try:
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir()
        st = RunState(config, staging)
        for name in STAGES[: STAGES.index(through) + 1]:
            t0 = time.perf_counter()
            _STAGE_FUNCS[name](st)
            st.timings[name] = time.perf_counter() - t0
        manifest = {
            "tool_version": __version__,
            "config_hash": config.digest(),
            "config": config.to_dict(),
            "inputs": {k: {"path": getattr(config, k), "sha256": file_digest(getattr(config, k))}
                       for k in ("tracts", "attributes", "listings", "cities")},
            "stages": list(STAGES[: STAGES.index(through) + 1]),
            "counts": st.counts,
            "warnings": collector.messages,
        }
        write_json(staging / "manifest.json", manifest)
        write_json(staging / "timings.json", st.timings)
        if out.exists():
            shutil.rmtree(out)
        staging.rename(out)
        return manifest
    finally:
        pkg_log.removeHandler(collector)
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)
        lock.unlink(missing_ok=True)
