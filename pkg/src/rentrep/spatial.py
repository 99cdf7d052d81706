"""Spatial weights construction and Moran's I.

A :class:`WeightsMatrix` keeps the unstandardized matrix it was built from,
so that subsetting to a regression sample re-standardizes the surviving
rows instead of leaving them short of one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.spatial import cKDTree
from scipy.stats import norm
from shapely import STRtree

from .geo import EARTH_RADIUS_KM, haversine_km

log = logging.getLogger(__name__)

CONTIGUITY_TOLERANCE = 1e-9


@dataclass(eq=False)
class WeightsMatrix:
    ids: list[str]
    matrix: sp.csr_matrix
    standardization: str = "binary"
    raw: sp.csr_matrix | None = field(default=None, repr=False)
    symmetric_pattern: bool = True

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=float)
        self.matrix.eliminate_zeros()
        self.matrix.sort_indices()
        if self.raw is None:
            self.raw = self.matrix

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def islands(self) -> list[str]:
        nnz = np.diff(self.matrix.indptr)
        return [self.ids[i] for i in np.flatnonzero(nnz == 0)]

    @property
    def s0(self) -> float:
        return float(self.matrix.sum())

    def lag(self, x):
        return self.matrix @ np.asarray(x, dtype=float)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Real spectrum of the matrix, ascending.

        A row-standardized ``D^-1 A`` with symmetric ``A`` is similar to
        ``D^-1/2 A D^-1/2``, which is symmetric, so ``eigvalsh`` applies.
        Islands contribute zero eigenvalues.
        """
        raw = self.raw
        if self.standardization == "row" and _is_symmetric(raw):
            d = np.asarray(raw.sum(axis=1)).ravel()
            inv = np.zeros_like(d)
            inv[d > 0] = 1 / np.sqrt(d[d > 0])
            dh = sp.diags(inv)
            sym = (dh @ raw @ dh).toarray()
            return linalg.eigvalsh(sym)
        if _is_symmetric(self.matrix):
            return linalg.eigvalsh(self.matrix.toarray())
        ev = linalg.eigvals(self.matrix.toarray())
        if np.max(np.abs(ev.imag)) > 1e-8:
            log.warning("weights spectrum has complex eigenvalues; using real parts")
        return np.sort(ev.real)

    def subset(self, ids: Sequence[str]) -> "WeightsMatrix":
        """Restrict to ``ids`` (in the given order), recomputing standardization."""
        pos = {t: i for i, t in enumerate(self.ids)}
        idx = np.array([pos[t] for t in ids], dtype=int)
        raw = self.raw[idx][:, idx]
        w = WeightsMatrix(list(ids), raw, "binary" if self.standardization == "binary"
                          else "raw", symmetric_pattern=self.symmetric_pattern)
        return row_standardize(w) if self.standardization == "row" else w


def _is_symmetric(m: sp.spmatrix, tol: float = 1e-12) -> bool:
    diff = abs(m - m.T)
    return diff.nnz == 0 or diff.max() <= tol


def _ids_and_geoms(tracts):
    if isinstance(tracts, dict):
        ids = sorted(tracts)
        return ids, [tracts[t] for t in ids]
    tracts = sorted(tracts, key=lambda t: t.tract_id)
    return [t.tract_id for t in tracts], [t.geometry for t in tracts]


def queen_contiguity(tracts, tolerance: float = CONTIGUITY_TOLERANCE) -> WeightsMatrix:
    """Binary queen contiguity: neighbours share at least one boundary point.

    ``tracts`` is a ``tract_id -> geometry`` mapping or records with
    ``tract_id``/``geometry``. Bounding boxes prune candidates; a pair is
    adjacent when the polygons lie within ``tolerance`` degrees of each other.
    """
    ids, geoms = _ids_and_geoms(tracts)
    arr = np.array(geoms, dtype=object)
    tree = STRtree(arr)
    left, right = tree.query(arr, predicate="dwithin", distance=tolerance)
    keep = left != right
    left, right = left[keep], right[keep]
    n = len(ids)
    a = sp.coo_matrix((np.ones(left.size), (left, right)), shape=(n, n)).tocsr()
    a.data[:] = 1.0
    a = a.maximum(a.T)
    w = WeightsMatrix(ids, a, "binary")
    if w.islands:
        log.info("%d tracts have no contiguity neighbours", len(w.islands))
    return w


def _unit_vectors(lonlat: np.ndarray) -> np.ndarray:
    lon, lat = np.radians(lonlat[:, 0]), np.radians(lonlat[:, 1])
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def distance_decay(
    ids: Sequence[str],
    centroids,
    cutoff_km: float = 10.0,
    alpha: float = 1.0,
) -> WeightsMatrix:
    """Inverse-power distance weights ``d**-alpha`` for pairs within ``cutoff_km``.

    Pairs with coincident centroids get the largest finite weight in their row.
    """
    if not (cutoff_km > 0 and alpha > 0):
        raise ValueError("cutoff and exponent must be positive")
    lonlat = np.asarray(centroids, dtype=float)
    n = len(ids)
    chord = 2 * math.sin(min(cutoff_km / (2 * EARTH_RADIUS_KM), math.pi / 2))
    tree = cKDTree(_unit_vectors(lonlat))
    # small slack; the haversine check below is authoritative
    pairs = tree.query_pairs(chord * (1 + 1e-9) + 1e-12, output_type="ndarray")
    if pairs.size == 0:
        return WeightsMatrix(list(ids), sp.csr_matrix((n, n)), "raw")
    d = haversine_km(lonlat[pairs[:, 0]], lonlat[pairs[:, 1]])
    keep = d <= cutoff_km
    pairs, d = pairs[keep], d[keep]
    with np.errstate(divide="ignore"):
        wts = np.where(d > 0, d ** (-alpha), np.inf)
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    v = np.concatenate([wts, wts])
    if np.isinf(v).any():
        rowmax = np.zeros(n)
        finite = np.isfinite(v)
        np.maximum.at(rowmax, i[finite], v[finite])
        bad = ~finite
        log.warning("%d tract pairs have coincident centroids", int(bad.sum()) // 2)
        fill = np.where(rowmax[i[bad]] > 0, rowmax[i[bad]], 1.0)
        v[bad] = fill
        # keep the matrix symmetric where the two rows disagree
        m = sp.coo_matrix((v, (i, j)), shape=(n, n)).tocsr()
        m = m.maximum(m.T)
        return WeightsMatrix(list(ids), m, "raw")
    m = sp.coo_matrix((v, (i, j)), shape=(n, n)).tocsr()
    return WeightsMatrix(list(ids), m, "raw")


def row_standardize(w: WeightsMatrix) -> WeightsMatrix:
    """Divide each row by its sum; island rows stay zero."""
    raw = w.raw if w.standardization == "row" else w.matrix
    rs = np.asarray(raw.sum(axis=1)).ravel()
    inv = np.zeros_like(rs)
    inv[rs > 0] = 1 / rs[rs > 0]
    m = sp.diags(inv) @ raw
    return WeightsMatrix(list(w.ids), m, "row", raw=raw, symmetric_pattern=w.symmetric_pattern)


@dataclass(frozen=True)
class MoranResult:
    I: float
    expected: float
    variance: float
    z: float
    p_value: float
    n: int


def morans_i(residuals, w: WeightsMatrix) -> MoranResult:
    """Moran's I with its normal-approximation z score and two-sided p."""
    e = np.asarray(residuals, dtype=float).ravel()
    n = e.size
    if n != w.n:
        raise ValueError("residual length does not match weights")
    e = e - e.mean()
    ee = e @ e
    if ee == 0:
        raise ValueError("residuals have zero variance")
    m = w.matrix
    s0 = m.sum()
    if s0 == 0:
        raise ValueError("weights matrix has no links")
    stat = n / s0 * (e @ (m @ e)) / ee
    expected = -1 / (n - 1)
    sym = m + m.T
    s1 = 0.5 * sym.multiply(sym).sum()
    s2 = np.sum((np.asarray(m.sum(axis=1)).ravel() + np.asarray(m.sum(axis=0)).ravel()) ** 2)
    var = (n * n * s1 - n * s2 + 3 * s0 * s0) / ((n * n - 1) * s0 * s0) - expected**2
    z = (stat - expected) / math.sqrt(var)
    return MoranResult(float(stat), expected, float(var), float(z), float(2 * norm.sf(abs(z))), n)


def write_weights(path: str | Path, w: WeightsMatrix) -> None:
    """Write ``from_id to_id weight`` lines after an ``n standardization`` header."""
    coo = w.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with Path(path).open("w") as fh:
        fh.write(f"{w.n} {w.standardization}\n")
        for k in order:
            fh.write(f"{w.ids[coo.row[k]]} {w.ids[coo.col[k]]} {coo.data[k]:.17g}\n")


def read_weights(path: str | Path, ids: Sequence[str]) -> WeightsMatrix:
    lines = Path(path).read_text().splitlines()
    n, standardization = lines[0].split()
    if int(n) != len(ids):
        raise ValueError("weights file size does not match id list")
    pos = {t: i for i, t in enumerate(ids)}
    rows, cols, vals = [], [], []
    for line in lines[1:]:
        a, b, v = line.split()
        rows.append(pos[a])
        cols.append(pos[b])
        vals.append(float(v))
    m = sp.coo_matrix((vals, (rows, cols)), shape=(len(ids), len(ids))).tocsr()
    return WeightsMatrix(list(ids), m, standardization)
