"""Stability selection with an embedded multi-task solver.

For every grid point and every half-subsample the solver is fit once; the
per-task supports are counted into selection frequencies, the stability score
of a feature is its best frequency over the grid, and the stable set is every
feature whose score reaches the threshold.
"""

import csv
import hashlib
import json
import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigError, DimensionError, InsufficientDataError, NumericalError
from .solvers import SolverConfig, fit

log = logging.getLogger(__name__)


@dataclass
class StabilityConfig:
    solver: str = "cfsgl"
    grid: list = field(default_factory=list)
    n_subsamples: int = 10
    threshold: float = 0.8
    seed: int = 0
    nonzero_eps: float = 1e-8
    max_iter: int = 2000
    tol: float = 1e-6

    def __post_init__(self):
        self.solver = self.solver.lower()
        if self.solver not in ("tgl", "cfsgl"):
            raise ConfigError(f"stability solver must be tgl or cfsgl, got {self.solver!r}")
        if not self.grid:
            raise ConfigError("stability grid is empty")
        if self.n_subsamples < 1:
            raise ConfigError("n_subsamples must be >= 1")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie strictly between 0 and 1")
        self.grid = [{k: float(v) for k, v in sorted(dict(g).items())} for g in self.grid]

    @property
    def subsample_fraction(self):
        return 0.5

    def solver_config(self):
        return SolverConfig(max_iter=self.max_iter, tol=self.tol)

    def to_dict(self):
        return {
            "solver": self.solver,
            "grid": self.grid,
            "n_subsamples": self.n_subsamples,
            "subsample_fraction": self.subsample_fraction,
            "threshold": self.threshold,
            "seed": self.seed,
            "nonzero_eps": self.nonzero_eps,
            "max_iter": self.max_iter,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("subsample_fraction", None)
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown stability config keys: {sorted(extra)}")
        return cls(**data)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def default_grid(X, Y, solver="cfsgl", n_sparsity=21, n_fused=10, min_ratio=0.05,
                 fused_range=(1e-3, 1.0)):
    """Geometric ``n_sparsity x n_fused`` grid scaled to the data.

    The sparsity axis runs from the half-sample group-lasso zero threshold
    down by ``min_ratio``; the fused / temporal axis is a multiple of the
    half-sample size. Defaults give 21 x 10 = 210 points.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
    half = X.shape[0] // 2
    top = 2.0 * np.linalg.norm(X.T @ Y, axis=1).max() * half / X.shape[0]
    sparsity = np.geomspace(top, top * min_ratio, n_sparsity)
    fused = half * np.geomspace(fused_range[0], fused_range[1], n_fused)
    grid = []
    for s in sparsity:
        for f in fused:
            if solver == "tgl":
                grid.append({"theta1": 0.0, "theta2": float(f), "delta": float(s)})
            else:
                grid.append({"theta1": float(s) / 2, "theta2": float(f), "delta": float(s) / 2})
    return grid


def subsample_indices(n, run, seed):
    """Sorted random ``floor(n/2)``-subset, a pure function of (n, run, seed)."""
    if n < 2:
        raise InsufficientDataError("subsampling needs n >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(run)]))
    return np.sort(rng.choice(n, size=n // 2, replace=False))


def selection_set(W, j, nonzero_eps=1e-8):
    W = np.asarray(W)
    if not 0 <= j < W.shape[1]:
        raise DimensionError(f"task {j} out of range for {W.shape[1]} tasks")
    return set(np.flatnonzero(np.abs(W[:, j]) > nonzero_eps).tolist())


def selection_frequency(runs, f, gamma):
    if len(runs) != gamma:
        raise ConfigError(f"expected {gamma} selection sets, got {len(runs)}")
    return sum(1 for s in runs if f in s) / gamma


@dataclass
class StabilityReport:
    counts: np.ndarray          # d x k x G integer selection counts
    n_subsamples: int
    threshold: float
    feature_names: list
    task_labels: list
    config: dict
    failures: list = field(default_factory=list)

    @property
    def frequencies(self):
        return self.counts / self.n_subsamples

    @property
    def scores(self):
        return self.frequencies.max(axis=2)

    def stable_set(self, threshold=None):
        """Per task: ``[(feature, name, score), ...]`` sorted by score, then index."""
        th = self.threshold if threshold is None else threshold
        scores = self.scores
        out = []
        for j in range(scores.shape[1]):
            idx = np.flatnonzero(scores[:, j] >= th)
            order = sorted(idx.tolist(), key=lambda f: (-scores[f, j], f))
            out.append([(f, self.feature_names[f], float(scores[f, j])) for f in order])
        return out

    def stable_union(self, threshold=None):
        return sorted({f for task in self.stable_set(threshold) for f, _, _ in task})

    def to_dict(self, include_frequencies=True):
        out = {
            "provenance": self.config,
            "threshold": self.threshold,
            "n_subsamples": self.n_subsamples,
            "shape": list(self.counts.shape),
            "task_labels": list(self.task_labels),
            "failures": [list(f) for f in self.failures],
            "stable_set": {
                label: [{"feature": f, "pair": name, "score": s} for f, name, s in task]
                for label, task in zip(self.task_labels, self.stable_set())
            },
            "scores": self.scores.tolist(),
        }
        if include_frequencies:
            out["counts"] = self.counts.tolist()
        return out


def _cell_path(checkpoint_dir, g, i):
    return os.path.join(checkpoint_dir, f"cell_g{g:04d}_r{i:05d}.npy")


def _fit_cell(X, Y, config, g, i, checkpoint_dir):
    if checkpoint_dir is not None:
        path = _cell_path(checkpoint_dir, g, i)
        if os.path.exists(path):
            return g, i, np.load(path), None
    idx = subsample_indices(X.shape[0], i, config.seed)
    failure = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = fit(config.solver, X[idx], Y[idx], config.grid[g], config.solver_config())
        sel = np.abs(res.W) > config.nonzero_eps
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        sel = np.zeros((X.shape[1], Y.shape[1]), dtype=bool)
        failure = (g, i, str(exc))
    if checkpoint_dir is not None and failure is None:
        tmp = _cell_path(checkpoint_dir, g, i) + ".tmp.npy"
        np.save(tmp, sel)
        os.replace(tmp, _cell_path(checkpoint_dir, g, i))
    return g, i, sel, failure


def run_stability(X, Y, config, feature_names=None, task_labels=None, jobs=1,
                  checkpoint_dir=None):
    """Sweep every (grid point, subsample) cell and aggregate the report.

    Cells are independent, so the report does not depend on ``jobs``. With a
    ``checkpoint_dir`` each finished cell is stored and reused on rerun.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise DimensionError("X and Y disagree on the number of rows")
    n, d = X.shape
    k = Y.shape[1]
    G = len(config.grid)
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)
        stamp = os.path.join(checkpoint_dir, "config.json")
        digest = {"config": config.digest(),
                  "data": hashlib.sha256(X.tobytes() + Y.tobytes()).hexdigest()}
        if os.path.exists(stamp):
            with open(stamp, encoding="utf-8") as fh:
                if json.load(fh) != digest:
                    raise ConfigError(f"checkpoint dir {checkpoint_dir} belongs to another run")
        else:
            with open(stamp, "w", encoding="utf-8") as fh:
                json.dump(digest, fh, sort_keys=True)

    cells = [(g, i) for g in range(G) for i in range(config.n_subsamples)]
    log.info("stability sweep: %d grid points x %d subsamples = %d fits",
             G, config.n_subsamples, len(cells))
    if jobs == 1:
        results = [_fit_cell(X, Y, config, g, i, checkpoint_dir) for g, i in cells]
    else:
        results = Parallel(n_jobs=jobs)(
            delayed(_fit_cell)(X, Y, config, g, i, checkpoint_dir) for g, i in cells)

    counts = np.zeros((d, k, G), dtype=np.int64)
    failures = []
    for g, i, sel, failure in results:
        counts[:, :, g] += sel
        if failure is not None:
            failures.append(failure)
            warnings.warn(f"fit failed at grid point {g}, subsample {i}: {failure[2]}",
                          RuntimeWarning, stacklevel=2)
    failures.sort()
    if feature_names is None:
        feature_names = [str(f) for f in range(d)]
    if task_labels is None:
        task_labels = [f"task{j}" for j in range(k)]
    return StabilityReport(counts=counts, n_subsamples=config.n_subsamples,
                           threshold=config.threshold, feature_names=list(feature_names),
                           task_labels=list(task_labels), config=config.to_dict(),
                           failures=failures)


def rank_features(report):
    """Feature indices ordered by max-over-tasks score, then mean frequency, then index."""
    freq = report.frequencies
    best = freq.max(axis=2).max(axis=1)
    mean = freq.mean(axis=(1, 2))
    return np.lexsort((np.arange(len(best)), -mean, -best))


def screen_features(X, Y, config, target_count, jobs=1, checkpoint_dir=None):
    """Top ``target_count`` columns by stability (deterministic order)."""
    d = np.asarray(X).shape[1]
    if not 0 < target_count <= d:
        raise DimensionError(f"target_count {target_count} not in 1..{d}")
    report = run_stability(X, Y, config, jobs=jobs, checkpoint_dir=checkpoint_dir)
    return rank_features(report)[:target_count].tolist()


def write_stable_csv(path, report, definitions=None):
    """Stable pairs, one row per (task, feature), named ``ROI_A-ROI_B``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", "feature", "pair", "score", "definition"])
        for label, task in zip(report.task_labels, report.stable_set()):
            for f, name, score in task:
                w.writerow([label, f, name, repr(score), _definition(name, definitions)])


def _definition(pair, definitions):
    if not definitions:
        return ""
    parts = pair.split("-", 1)
    if len(parts) != 2:
        return definitions.get(pair, "")
    left = definitions.get(parts[0], parts[0])
    right = definitions.get(parts[1], parts[1])
    return f"{left} <=> {right}"
