"""Temporal trend vectors and pairwise spatial-similarity design matrices."""

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    CovarianceError,
    DimensionError,
    InsufficientDataError,
    OrderingError,
    ZeroBaselineError,
)

log = logging.getLogger(__name__)

DAYS_PER_MONTH = 30.4375
ZERO_NORM = 1e-12
MEASURES = ("original", "cosine", "euclidean", "mahalanobis")


class TrendVector(NamedTuple):
    magnitude: float
    velocity: float


class PairIndex(NamedTuple):
    a: int
    b: int
    column: int


@dataclass
class ScalingStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    constant: np.ndarray

    def transform_X(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def transform_Y(self, Y):
        return np.asarray(Y, dtype=float) - self.y_mean

    def inverse_Y(self, Y):
        return np.asarray(Y, dtype=float) + self.y_mean


@dataclass
class DesignMatrix:
    values: np.ndarray
    column_names: list
    column_meta: list = field(default_factory=list)
    measure: str = "cosine"
    standardization: ScalingStats = None
    info: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    def take(self, columns):
        columns = list(columns)
        meta = [self.column_meta[c] for c in columns] if self.column_meta else []
        return DesignMatrix(self.values[:, columns], [self.column_names[c] for c in columns],
                            meta, self.measure, None, dict(self.info))


def trend_vector(x_bl, x_follow, dt_days):
    """(relative change, change per month) between two scans."""
    if not dt_days > 0:
        raise OrderingError(f"follow-up must come after baseline (dt = {dt_days} days)")
    if x_bl == 0:
        raise ZeroBaselineError("relative change undefined for a zero baseline value")
    delta = x_follow - x_bl
    return TrendVector(delta / x_bl, delta / (dt_days / DAYS_PER_MONTH))


def trend_array(baseline, follow, dt_days):
    """Vectorised trend vectors.

    ``baseline`` and ``follow`` are ``n x r``; ``dt_days`` has length ``n``.
    Returns an ``n x r x 2`` array. Zero-baseline cells get magnitude 0 and a
    warning, keeping the velocity.
    """
    baseline = np.asarray(baseline, dtype=float)
    follow = np.asarray(follow, dtype=float)
    dt = np.asarray(dt_days, dtype=float).reshape(-1, 1)
    if np.any(dt <= 0):
        raise OrderingError("every follow-up must come after its baseline")
    delta = follow - baseline
    zero = baseline == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero-baseline cells: magnitude set to 0",
                      RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        magnitude = np.where(zero, 0.0, delta / np.where(zero, 1.0, baseline))
    velocity = delta / (dt / DAYS_PER_MONTH)
    return np.stack([magnitude, velocity], axis=-1)


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < ZERO_NORM or nv < ZERO_NORM:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def euclidean_distance(u, v):
    return float(np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(v, dtype=float)))


def regularize_cov(cov):
    cov = np.asarray(cov, dtype=float)
    return cov + 1e-6 * np.trace(cov) / 2.0 * np.eye(cov.shape[0])


def mahalanobis_distance(u, v, cov):
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise CovarianceError("covariance must be a symmetric 2x2 matrix")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance is not positive definite") from exc
    diff = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    z = np.linalg.solve(L, diff)
    return float(np.sqrt(z @ z))


def pair_indices(r):
    """All unordered ROI pairs ``a < b``, lexicographic, with their column."""
    if r < 2:
        raise DimensionError(f"need at least 2 ROIs for pair features, got {r}")
    a, b = np.triu_indices(r, k=1)
    return a, b


def pair_name(roi_a, roi_b):
    return f"{roi_a}-{roi_b}"


def _pooled_pair_cov(trends, a, b):
    # Per-pair 2x2 covariance over the 2n pooled trend vectors of ROIs a and b.
    n = trends.shape[0]
    s1 = trends.sum(axis=0)                                  # r x 2
    s2 = np.einsum("nri,nrj->rij", trends, trends)           # r x 2 x 2
    m = 2 * n
    mean = (s1[a] + s1[b]) / m                               # p x 2
    second = (s2[a] + s2[b]) / m
    cov = second - mean[:, :, None] * mean[:, None, :]
    cov *= m / (m - 1)
    tr = cov[:, 0, 0] + cov[:, 1, 1]
    cov[:, 0, 0] += 1e-6 * tr / 2.0
    cov[:, 1, 1] += 1e-6 * tr / 2.0
    return cov


def build_pair_features(trends, measure="cosine", roi_names=None, chunk=64):
    """Pairwise similarity design matrix from an ``n x r x 2`` trend array.

    Column ``col(a, b)`` enumerates pairs ``a < b`` lexicographically. For the
    Mahalanobis measure each pair uses the pooled covariance of the two ROIs'
    trend vectors across all rows given here.
    """
    trends = np.asarray(trends, dtype=float)
    if trends.ndim != 3 or trends.shape[2] != 2:
        raise DimensionError("trends must be an n x r x 2 array")
    n, r, _ = trends.shape
    a, b = pair_indices(r)
    if roi_names is None:
        roi_names = [f"roi_{i}" for i in range(r)]
    if len(roi_names) != r:
        raise DimensionError("roi_names length does not match the trend array")
    measure = measure.lower()
    p = len(a)
    out = np.empty((n, p))
    info = {}

    if measure == "cosine":
        norms = np.linalg.norm(trends, axis=2)
        unit = np.where(norms[..., None] < ZERO_NORM, 0.0,
                        trends / np.where(norms < ZERO_NORM, 1.0, norms)[..., None])
        for lo in range(0, n, chunk):
            u = unit[lo:lo + chunk]
            out[lo:lo + chunk] = (u[:, a, :] * u[:, b, :]).sum(axis=2)
        np.clip(out, -1.0, 1.0, out=out)
    elif measure == "euclidean":
        for lo in range(0, n, chunk):
            t = trends[lo:lo + chunk]
            out[lo:lo + chunk] = np.linalg.norm(t[:, a, :] - t[:, b, :], axis=2)
    elif measure == "mahalanobis":
        if n < 3:
            raise InsufficientDataError("Mahalanobis covariance needs at least 3 subjects")
        cov = _pooled_pair_cov(trends, a, b)
        det = cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] * cov[:, 1, 0]
        if np.any(~(cov[:, 0, 0] > 0)) or np.any(~(det > 0)):
            bad = int(np.flatnonzero(~((cov[:, 0, 0] > 0) & (det > 0)))[0])
            raise CovarianceError(
                f"pair {pair_name(roi_names[a[bad]], roi_names[b[bad]])} has a "
                "non positive definite covariance")
        inv = np.empty_like(cov)
        inv[:, 0, 0] = cov[:, 1, 1] / det
        inv[:, 1, 1] = cov[:, 0, 0] / det
        inv[:, 0, 1] = -cov[:, 0, 1] / det
        inv[:, 1, 0] = -cov[:, 1, 0] / det
        for lo in range(0, n, chunk):
            t = trends[lo:lo + chunk]
            diff = t[:, a, :] - t[:, b, :]
            q = np.einsum("npi,pij,npj->np", diff, inv, diff)
            out[lo:lo + chunk] = np.sqrt(np.maximum(q, 0.0))
        info["covariance"] = "pooled per-pair, ridge 1e-6*trace/2"
    else:
        raise ValueError(f"unknown measure {measure!r}")

    meta = [PairIndex(int(i), int(j), c) for c, (i, j) in enumerate(zip(a, b))]
    names = [pair_name(roi_names[i], roi_names[j]) for i, j in zip(a, b)]
    return DesignMatrix(out, names, meta, measure, None, info)


def original_features(baseline, roi_names):
    """Raw baseline ROI values; the non-pair comparison mode."""
    baseline = np.asarray(baseline, dtype=float)
    return DesignMatrix(baseline.copy(), list(roi_names), [], "original")


def standardize(X, Y):
    """Z-score ``X`` columns (population std) and centre ``Y`` columns.

    Constant columns become 0 with their std recorded as 1.
    """
    Xv = X.values if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
    Yv = np.asarray(Y, dtype=float)
    if Yv.ndim == 1:
        Yv = Yv[:, None]
    if Xv.shape[0] < 2:
        raise InsufficientDataError("standardization needs at least 2 rows")
    x_mean = Xv.mean(axis=0)
    x_std = Xv.std(axis=0)
    constant = x_std <= 1e-12 * np.maximum(1.0, np.abs(x_mean))
    x_std = np.where(constant, 1.0, x_std)
    stats = ScalingStats(x_mean, x_std, Yv.mean(axis=0), constant)
    Xs = stats.transform_X(Xv)
    Xs[:, constant] = 0.0
    Ys = stats.transform_Y(Yv)
    if isinstance(X, DesignMatrix):
        Xs = DesignMatrix(Xs, list(X.column_names), list(X.column_meta), X.measure,
                          stats, dict(X.info))
    return Xs, Ys, stats


def write_design_csv(path, X, row_ids=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(X.column_names)
        if row_ids is not None:
            header = ["subject_id"] + header
        w.writerow(header)
        for i, row in enumerate(X.values):
            vals = [repr(float(v)) for v in row]
            w.writerow(([row_ids[i]] if row_ids is not None else []) + vals)


def read_design_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    ids = None
    if header and header[0] == "subject_id":
        ids = [r[0] for r in body]
        header = header[1:]
        body = [r[1:] for r in body]
    values = np.array([[float(v) for v in r] for r in body], dtype=float)
    return DesignMatrix(values.reshape(len(body), len(header)), header), ids
