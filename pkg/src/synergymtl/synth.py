"""Synthetic cohorts and regression instances with planted structure."""

import datetime as _dt
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import VISIT_CODES, Cohort, SubjectRecord, Visit, VisitPair, target_label
from .errors import ConfigError
from .features import DAYS_PER_MONTH, build_pair_features, pair_indices, trend_array

_VISIT_MONTHS = {"BL": 0, "M06": 6, "M12": 12, "M24": 24, "M36": 36}


@dataclass
class GroundTruth:
    W_true: np.ndarray
    support: list
    trends: np.ndarray = None
    support_names: list = field(default_factory=list)
    intercepts: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "W_true": self.W_true.tolist(),
            "support": [int(s) for s in self.support],
            "support_names": list(self.support_names),
            "intercepts": [float(v) for v in self.intercepts],
        }
        if self.trends is not None:
            out["trends_shape"] = list(self.trends.shape)
            out["trends"] = self.trends.tolist()
        return out


@dataclass
class SynthConfig:
    n_subjects: int = 300
    n_rois: int = 16
    k_tasks: int = 3
    true_support: object = 6          # int, or list of [roi_a, roi_b] index pairs
    noise_sigma: float = 2.0
    temporal_drift: object = None     # None -> random per-ROI slopes; or list of r floats
    seed: int = 0
    span: str = "BL:M06"
    score_name: str = "adas_cog"
    signal_scale: float = 3.0
    missing_rate: float = 0.0

    def __post_init__(self):
        d = self.n_rois * (self.n_rois - 1) // 2
        if self.n_rois < 2 or self.n_subjects < 3:
            raise ConfigError("need at least 2 ROIs and 3 subjects")
        if not 1 <= self.k_tasks <= len(VISIT_CODES):
            raise ConfigError(f"k_tasks must be in 1..{len(VISIT_CODES)}")
        size = self.true_support if isinstance(self.true_support, int) else len(self.true_support)
        if not 0 <= size <= d:
            raise ConfigError(f"true_support {size} exceeds pair dimension {d}")
        if self.noise_sigma < 0 or not 0 <= self.missing_rate < 0.5:
            raise ConfigError("noise_sigma must be >= 0 and missing_rate in [0, 0.5)")
        if self.temporal_drift is not None and len(self.temporal_drift) != self.n_rois:
            raise ConfigError("temporal_drift needs one slope per ROI")

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown synth config keys: {sorted(extra)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


def _random_walk_columns(rng, rows, k, step=0.1):
    # start magnitudes bounded away from zero so every planted row is detectable
    W = np.empty((rows, k))
    W[:, 0] = rng.choice([-1.0, 1.0], size=rows) * rng.uniform(0.5, 1.5, size=rows)
    for j in range(1, k):
        W[:, j] = W[:, j - 1] + step * rng.standard_normal(rows)
    return W


def generate_regression_instance(n, d, k, support_size, snr, smooth=True, seed=0):
    """Gaussian design, row-sparse ``W_true`` and ``Y = X W_true + noise``.

    ``snr`` is ``||X W||^2 / E||noise||^2``; ``math.inf`` gives noiseless
    targets. With an empty support the targets are unit-variance noise.
    """
    if not 0 <= support_size <= d:
        raise ConfigError("support_size must lie in [0, d]")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    support = np.sort(rng.choice(d, size=support_size, replace=False))
    W = np.zeros((d, k))
    if support_size:
        if smooth:
            W[support] = _random_walk_columns(rng, support_size, k)
        else:
            W[support] = rng.standard_normal((support_size, k))
    signal = X @ W
    noise = rng.standard_normal((n, k))
    if support_size == 0:
        Y = noise
    elif math.isinf(snr):
        Y = signal
    else:
        sigma = math.sqrt(np.mean(signal ** 2) / snr)
        Y = signal + sigma * noise
    return X, Y, GroundTruth(W_true=W, support=support.tolist())


def _support_pairs(cfg, rng):
    a, b = pair_indices(cfg.n_rois)
    if isinstance(cfg.true_support, int):
        cols = np.sort(rng.choice(len(a), size=cfg.true_support, replace=False))
    else:
        lookup = {(int(i), int(j)): c for c, (i, j) in enumerate(zip(a, b))}
        cols = []
        for pair in cfg.true_support:
            i, j = sorted(int(p) for p in pair)
            if (i, j) not in lookup:
                raise ConfigError(f"pair {pair} is not a valid ROI pair")
            cols.append(lookup[(i, j)])
        cols = np.array(sorted(set(cols)), dtype=int)
    return cols, a, b


def generate_cohort(config):
    """Two-scan cohort whose targets are linear in cosine pair features.

    Each planted pair couples the relative drift of its second ROI to that of
    the first through a per-subject severity, so the sign agreement of the two
    trends (and hence their cosine similarity) varies across subjects.
    Targets at every task visit are ``intercept + X_cos_std @ W_true + noise``.
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    span = VisitPair.parse(cfg.span)
    n, r, k = cfg.n_subjects, cfg.n_rois, cfg.k_tasks
    roi_names = [f"ROI{j:03d}" for j in range(r)]
    support, a, b = _support_pairs(cfg, rng)

    if cfg.temporal_drift is None:
        drift = rng.normal(-0.02, 0.01, size=r)
    else:
        drift = np.asarray(cfg.temporal_drift, dtype=float)
    scale = rng.uniform(0.5, 5.0, size=r)
    baseline = scale * rng.lognormal(0.0, 0.15, size=(n, r))
    severity = rng.standard_normal(n)
    rel = drift + 0.03 * rng.standard_normal((n, r))
    for c in support:
        i, j = a[c], b[c]
        coupling = np.tanh(1.5 * severity + rng.standard_normal(n))
        rel[:, j] = coupling * np.abs(rel[:, i]) * np.sign(rel[:, i]) \
            + 0.005 * rng.standard_normal(n)
    follow = baseline * (1.0 + rel)

    months = _VISIT_MONTHS[span.follow]
    jitter = rng.integers(-14, 15, size=n)
    dt_days = np.round(months * DAYS_PER_MONTH).astype(int) + jitter
    trends = trend_array(baseline, follow, dt_days)
    Xc = build_pair_features(trends, "cosine", roi_names).values
    mu = Xc.mean(axis=0)
    sd = Xc.std(axis=0)
    sd[sd < 1e-12] = 1.0
    Xs = (Xc - mu) / sd

    d = Xc.shape[1]
    W = np.zeros((d, k))
    if len(support):
        W[support] = _random_walk_columns(rng, len(support), k, step=0.15)
    W *= cfg.signal_scale / max(1.0, math.sqrt(len(support)))
    intercepts = 15.0 + 2.0 * np.arange(k)
    Y = intercepts + Xs @ W + cfg.noise_sigma * rng.standard_normal((n, k))

    task_visits = list(VISIT_CODES[:k])
    start = _dt.date(2006, 1, 1)
    subjects = []
    for i in range(n):
        sid = f"S{i + 1:04d}"
        bl_date = start + _dt.timedelta(days=int(rng.integers(0, 720)))
        visits = {}
        codes = sorted(set(task_visits) | {span.baseline, span.follow},
                       key=VISIT_CODES.index)
        for code in codes:
            if code == span.baseline:
                date, rois = bl_date, baseline[i].copy()
            elif code == span.follow:
                date, rois = bl_date + _dt.timedelta(days=int(dt_days[i])), follow[i].copy()
            else:
                date = bl_date + _dt.timedelta(days=int(round(_VISIT_MONTHS[code] * DAYS_PER_MONTH)))
                rois = np.full(r, np.nan)
            scores = {cfg.score_name: math.nan}
            if code in task_visits:
                scores[cfg.score_name] = float(Y[i, task_visits.index(code)])
            visits[code] = Visit(code, date, rois, scores, True)
        if cfg.missing_rate > 0:
            for code in (span.baseline, span.follow):
                mask = rng.random(r) < cfg.missing_rate
                visits[code].roi_values[mask] = np.nan
        # severity terciles: high -> AD, low -> NL
        dx = "AD" if severity[i] > 0.67 else ("NL" if severity[i] < -0.67 else "MCI")
        subjects.append(SubjectRecord(sid, dx, [visits[c] for c in codes]))

    cohort = Cohort(subjects, roi_names, [cfg.score_name])
    names = [f"{roi_names[a[c]]}-{roi_names[b[c]]}" for c in support]
    truth = GroundTruth(W_true=W, support=support.tolist(), trends=trends,
                        support_names=names, intercepts=intercepts.tolist())
    return cohort, truth


def cohort_targets(config):
    """The ``(score, visit)`` targets a synthetic cohort carries."""
    return [(config.score_name, v) for v in VISIT_CODES[:config.k_tasks]]


def target_labels(config):
    return [target_label(s, v) for s, v in cohort_targets(config)]
