"""Regression metrics and the repeated cross-validation harness."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigError, DimensionError, UndefinedMetricError
from .features import DesignMatrix, standardize
from .solvers import SolverConfig, fit
from .stability import StabilityConfig, screen_features


def _pair(Y, Yhat):
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Yhat.ndim == 1:
        Yhat = Yhat[:, None]
    if Y.shape != Yhat.shape:
        raise DimensionError(f"Y {Y.shape} and Yhat {Yhat.shape} differ in shape")
    return Y, Yhat


def nmse(Y, Yhat):
    """Sum over tasks of squared error / target variance, over total samples."""
    Y, Yhat = _pair(Y, Yhat)
    var = Y.var(axis=0)
    if np.any(var <= 0):
        raise UndefinedMetricError("nMSE undefined for a constant target column")
    sse = ((Y - Yhat) ** 2).sum(axis=0)
    return float((sse / var).sum() / Y.size)


def rmse_per_task(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape or y.size == 0:
        raise DimensionError("rMSE needs two non-empty vectors of equal length")
    diff = y - yhat
    # scale first so tiny residuals do not underflow to an exact zero
    top = np.abs(diff).max()
    if top == 0:
        return 0.0
    return float(top * np.sqrt(np.mean((diff / top) ** 2)))


def weighted_r(Y, Yhat):
    """Sample-size weighted mean of per-task Pearson correlations."""
    Y, Yhat = _pair(Y, Yhat)
    yc = Y - Y.mean(axis=0)
    hc = Yhat - Yhat.mean(axis=0)
    sy = np.sqrt((yc ** 2).sum(axis=0))
    sh = np.sqrt((hc ** 2).sum(axis=0))
    if np.any(sy <= 0) or np.any(sh <= 0):
        raise UndefinedMetricError("correlation undefined for a constant column")
    corr = np.clip((yc * hc).sum(axis=0) / (sy * sh), -1.0, 1.0)
    n = np.full(Y.shape[1], Y.shape[0])
    return float((corr * n).sum() / n.sum())


@dataclass
class MetricTable:
    rows: dict
    per_task_rmse: dict
    n_repeats: int
    label: str = ""
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_repeats(cls, values, task_labels, label=""):
        """``values``: list of per-repeat dicts with nMSE, wR and rMSE lists."""
        def stat(xs):
            xs = np.asarray(xs, dtype=float)
            std = float(xs.std(ddof=1)) if xs.size > 1 else 0.0
            return float(xs.mean()), std

        rows = {"nMSE": stat([v["nMSE"] for v in values]),
                "wR": stat([v["wR"] for v in values])}
        per_task = {t: stat([v["rMSE"][j] for v in values]) for j, t in enumerate(task_labels)}
        raw = {"nMSE": [v["nMSE"] for v in values], "wR": [v["wR"] for v in values],
               "rMSE": [list(v["rMSE"]) for v in values]}
        return cls(rows, per_task, len(values), label, raw)

    def layout(self):
        """Table rows in display order: nMSE, wR, then one rMSE per time point."""
        out = [("nMSE", *self.rows["nMSE"]), ("wR", *self.rows["wR"])]
        out += [(f"{t} rMSE", m, s) for t, (m, s) in self.per_task_rmse.items()]
        return out

    def to_dict(self):
        return {
            "label": self.label,
            "n_repeats": self.n_repeats,
            "rows": {k: {"mean": m, "std": s} for k, (m, s) in self.rows.items()},
            "per_task_rmse": {k: {"mean": m, "std": s}
                              for k, (m, s) in self.per_task_rmse.items()},
            "raw": self.raw,
        }


def format_cell(mean, std, digits=3):
    return f"{mean:.{digits}f}±{std:.{digits}f}"


def write_tables_csv(path, tables):
    """Side-by-side ``mean±std`` columns, one per table, metrics as rows."""
    labels = list(tables)
    layouts = [tables[lab].layout() for lab in labels]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric"] + labels)
        for i, (name, _, _) in enumerate(layouts[0]):
            w.writerow([name] + [format_cell(lay[i][1], lay[i][2]) for lay in layouts])


def write_long_csv(path, tables):
    """Plot-ready rows: metric, time_point, mean, std, measure."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "time_point", "mean", "std", "measure"])
        for label, table in tables.items():
            for name, (m, s) in table.rows.items():
                w.writerow([name, "", repr(m), repr(s), label])
            for t, (m, s) in table.per_task_rmse.items():
                w.writerow(["rMSE", t, repr(m), repr(s), label])


@dataclass
class ExperimentConfig:
    n_folds: int = 5
    n_repeats: int = 30
    seed: int = 0
    solver: str = "tgl"
    penalties: dict = field(default_factory=lambda: {"theta1": 1.0, "theta2": 1.0,
                                                     "delta": 10.0})
    grid: list = None
    inner_folds: int = 3
    span: str = "BL:M06"
    measure: str = "cosine"
    standardize: bool = True
    screening: dict = None
    screening_mode: str = "fold"
    max_iter: int = 5000
    tol: float = 1e-6

    def __post_init__(self):
        if self.n_folds < 2:
            raise ConfigError("n_folds must be >= 2")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be >= 1")
        if self.screening_mode not in ("fold", "global"):
            raise ConfigError("screening_mode must be 'fold' or 'global'")
        if self.grid is not None and not self.grid:
            raise ConfigError("grid, when given, must be non-empty")

    @classmethod
    def from_dict(cls, data):
        extra = set(data) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown experiment config keys: {sorted(extra)}")
        return cls(**data)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def solver_config(self):
        return SolverConfig(max_iter=self.max_iter, tol=self.tol)


def fold_assignments(n, n_folds, seed, repeat):
    """Test-index arrays for one repeat; a pure function of (n, seed, repeat)."""
    if n_folds > n:
        raise ConfigError(f"n_folds {n_folds} exceeds n = {n}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(repeat)]))
    perm = rng.permutation(n)
    folds = [np.sort(f) for f in np.array_split(perm, n_folds)]
    if min(len(f) for f in folds) < 2 or n - max(len(f) for f in folds) < 2:
        raise ConfigError("every fold needs at least 2 test and 2 training samples")
    return folds


def _screen(X, Y, config, seed):
    opts = dict(config.screening)
    count = int(opts.pop("target_count"))
    opts.setdefault("seed", seed)
    scfg = StabilityConfig.from_dict(opts)
    return screen_features(X, Y, scfg, min(count, X.shape[1]))


def _inner_select(X, Y, config, seed):
    folds = fold_assignments(X.shape[0], config.inner_folds, seed, 0)
    best, best_score = None, np.inf
    for penalties in config.grid:
        pred = np.empty_like(Y)
        for test in folds:
            train = np.setdiff1d(np.arange(X.shape[0]), test)
            pred[test] = _fit_predict(X[train], Y[train], X[test], config, penalties)[0]
        try:
            score = nmse(Y, pred)
        except UndefinedMetricError:
            score = np.inf
        if score < best_score:
            best, best_score = penalties, score
    return best if best is not None else config.grid[0]


def _fit_predict(Xtr, Ytr, Xte, config, penalties, columns=None):
    if config.standardize:
        Xs, Yc, stats = standardize(Xtr, Ytr)
        Xt = stats.transform_X(Xte)
        Xt[:, stats.constant] = 0.0
    else:
        Xs, Xt = Xtr, Xte
        stats = None
        y_mean = Ytr.mean(axis=0)
        Yc = Ytr - y_mean
    if columns is not None:
        Xs, Xt = Xs[:, columns], Xt[:, columns]
    res = fit(config.solver, Xs, Yc, penalties, config.solver_config())
    Yhat = Xt @ res.W
    Yhat = stats.inverse_Y(Yhat) if stats is not None else Yhat + y_mean
    return Yhat, stats


def run_fold(X, Y, train, test, config, fold_seed, global_columns=None):
    """Fit on ``train`` rows only and predict ``test`` rows.

    Returns ``(Yhat_test, scaling_stats, columns)``; every statistic is a
    function of the training rows alone.
    """
    Xtr, Ytr = X[train], Y[train]
    columns = global_columns
    if config.screening and config.screening_mode == "fold":
        if config.standardize:
            Xs, Yc, _ = standardize(Xtr, Ytr)
        else:
            Xs, Yc = Xtr, Ytr - Ytr.mean(axis=0)
        columns = _screen(Xs, Yc, config, fold_seed)
    penalties = config.penalties
    if config.grid:
        Xin = Xtr if columns is None else Xtr[:, columns]
        penalties = _inner_select(Xin, Ytr, config, fold_seed)
    Yhat, stats = _fit_predict(Xtr, Ytr, X[test], config, penalties, columns)
    return Yhat, stats, columns


def _run_repeat(X, Y, config, repeat, global_columns):
    folds = fold_assignments(X.shape[0], config.n_folds, config.seed, repeat)
    pred = np.empty_like(Y)
    all_idx = np.arange(X.shape[0])
    for f, test in enumerate(folds):
        train = np.setdiff1d(all_idx, test)
        fold_seed = int(np.random.SeedSequence([config.seed, repeat, f]).generate_state(1)[0])
        pred[test] = run_fold(X, Y, train, test, config, fold_seed, global_columns)[0]
    return {
        "nMSE": nmse(Y, pred),
        "wR": weighted_r(Y, pred),
        "rMSE": [rmse_per_task(Y[:, j], pred[:, j]) for j in range(Y.shape[1])],
    }


def run_experiment(X, Y, config, task_labels=None, label="", jobs=1):
    """Repeated K-fold CV; returns a :class:`MetricTable` over repeats.

    Each repeat pools its out-of-fold predictions and scores them once.
    """
    Xv = X.values if isinstance(X, DesignMatrix) else np.asarray(X, dtype=float)
    Yv = np.asarray(Y, dtype=float)
    if Yv.ndim == 1:
        Yv = Yv[:, None]
    if Xv.shape[0] != Yv.shape[0]:
        raise DimensionError("X and Y disagree on the number of rows")
    if task_labels is None:
        task_labels = [f"T{j}" for j in range(Yv.shape[1])]
    global_columns = None
    if config.screening and config.screening_mode == "global":
        Xs, Yc, _ = standardize(Xv, Yv)
        global_columns = _screen(Xs, Yc, config, config.seed)
    if jobs == 1:
        values = [_run_repeat(Xv, Yv, config, r, global_columns)
                  for r in range(config.n_repeats)]
    else:
        values = Parallel(n_jobs=jobs)(
            delayed(_run_repeat)(Xv, Yv, config, r, global_columns)
            for r in range(config.n_repeats))
    return MetricTable.from_repeats(values, task_labels, label or config.measure)


def compare_measures(designs, Y, config, task_labels=None, jobs=1):
    """One table per feature mode, all on identical folds and seeds."""
    tables = {}
    for label, X in designs.items():
        tables[label] = run_experiment(X, Y, config, task_labels, label, jobs)
    return tables


def tables_to_json(tables):
    return json.dumps({k: t.to_dict() for k, t in tables.items()}, indent=2, sort_keys=True)
