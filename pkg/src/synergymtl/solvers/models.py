"""Lasso, ridge, Temporal Group Lasso and convex Fused Sparse Group Lasso.

All four share the unscaled squared loss ``||XW - Y||_F^2``; ``W`` is
``d x k`` with one column per time-point task.
"""

import numpy as np

from ..errors import ConfigError, DimensionError, SingularityError
from .fista import FitResult, SolverConfig, fista
from .prox import fsgl_rows_prox, group_rows_prox, soft_threshold


def temporal_difference_ops(k):
    """Forward-difference encodings ``(H, R)`` for ``k`` tasks.

    ``W @ H`` has columns ``W[:, j] - W[:, j+1]``; ``R @ W.T`` has the same
    differences as rows, so ``||WH||_F == ||RW^T||_F``.
    """
    if k < 1:
        raise DimensionError("need at least one task")
    H = np.zeros((k, k - 1))
    idx = np.arange(k - 1)
    H[idx, idx] = 1.0
    H[idx + 1, idx] = -1.0
    return H, H.T.copy()


def _check_shapes(X, Y, W=None):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X {X.shape} and Y {Y.shape} disagree on rows")
    if W is not None and W.shape != (X.shape[1], Y.shape[1]):
        raise DimensionError(f"W has shape {W.shape}, expected {(X.shape[1], Y.shape[1])}")
    return X, Y


def smooth_objective_and_grad(W, X, Y, theta1=0.0, theta2=0.0, H=None):
    """Value and gradient of ``||XW-Y||^2 + theta1 ||W||^2 + theta2 ||WH||^2``."""
    W = np.asarray(W, dtype=float)
    X, Y = _check_shapes(X, Y, W)
    resid = X @ W - Y
    value = float(np.vdot(resid, resid))
    grad = 2.0 * (X.T @ resid)
    if theta1:
        value += theta1 * float(np.vdot(W, W))
        grad += 2.0 * theta1 * W
    if theta2 and W.shape[1] > 1:
        if H is None:
            H, _ = temporal_difference_ops(W.shape[1])
        WH = W @ H
        value += theta2 * float(np.vdot(WH, WH))
        grad += 2.0 * theta2 * (WH @ H.T)
    return value, grad


def _default_config(config, **penalties):
    if config is None:
        return SolverConfig(penalties=penalties)
    merged = dict(config.penalties)
    merged.update(penalties)
    return SolverConfig(penalties=merged, max_iter=config.max_iter, tol=config.tol,
                        step0=config.step0, shrink=config.shrink)


def fit_ridge(X, Y, lam):
    """Closed-form ridge per task: ``(X^T X + lam I)^{-1} X^T Y``."""
    X, Y = _check_shapes(X, Y)
    d = X.shape[1]
    if lam < 0:
        raise SingularityError("ridge penalty must be nonnegative")
    if lam == 0 and np.linalg.matrix_rank(X) < d:
        raise SingularityError("X^T X is singular and lam = 0")
    A = X.T @ X + lam * np.eye(d)
    W = np.linalg.solve(A, X.T @ Y)
    resid = X @ W - Y
    obj = float(np.vdot(resid, resid) + lam * np.vdot(W, W))
    return FitResult(W=W, objective_trace=[obj], iterations=0, converged=True,
                     solver="ridge", config={"penalties": {"lam": float(lam)}})


def fit_lasso(X, Y, lam, config=None):
    """Per-task lasso ``||XW-Y||^2 + lam ||W||_1`` by FISTA."""
    X, Y = _check_shapes(X, Y)
    cfg = _default_config(config, lam=lam)

    def smooth(W):
        return smooth_objective_and_grad(W, X, Y)

    def prox(V, step):
        return soft_threshold(V, step * lam)

    def penalty(W):
        return lam * float(np.abs(W).sum())

    W0 = np.zeros((X.shape[1], Y.shape[1]))
    res = fista(smooth, prox, W0, cfg, penalty)
    res.solver = "lasso"
    res.config = cfg.to_dict()
    return res


def _tgl_direct(X, Y, theta1, theta2, H):
    # (X^T X + theta1 I) W + theta2 W H H^T = X^T Y, diagonalised on the task side.
    d = X.shape[1]
    A = X.T @ X + theta1 * np.eye(d)
    C = X.T @ Y
    B = theta2 * (H @ H.T)
    evals, Q = np.linalg.eigh(B)
    Ct = C @ Q
    Wt = np.empty_like(Ct)
    for j, ev in enumerate(evals):
        M = A + ev * np.eye(d)
        try:
            Wt[:, j] = np.linalg.solve(M, Ct[:, j])
        except np.linalg.LinAlgError as exc:
            raise SingularityError("TGL normal equations are singular") from exc
    return Wt @ Q.T


def tgl_objective(W, X, Y, theta1, theta2, delta, H=None):
    value, _ = smooth_objective_and_grad(W, X, Y, theta1, theta2, H)
    return value + delta * float(np.linalg.norm(W, axis=1).sum())


def fit_tgl(X, Y, theta1, theta2, delta, config=None):
    """Temporal Group Lasso.

    ``||XW-Y||^2 + theta1 ||W||_F^2 + theta2 ||WH||_F^2 + delta ||W||_{2,1}``.
    With ``delta == 0`` the problem is quadratic and is solved directly.
    """
    X, Y = _check_shapes(X, Y)
    cfg = _default_config(config, theta1=theta1, theta2=theta2, delta=delta)
    H, _ = temporal_difference_ops(Y.shape[1])
    if delta == 0:
        if theta1 == 0 and np.linalg.matrix_rank(X) < X.shape[1]:
            raise SingularityError("X^T X is singular and theta1 = 0")
        W = _tgl_direct(X, Y, theta1, theta2, H)
        obj = tgl_objective(W, X, Y, theta1, theta2, 0.0, H)
        return FitResult(W=W, objective_trace=[obj], iterations=0, converged=True,
                         solver="tgl", config=cfg.to_dict())

    def smooth(W):
        return smooth_objective_and_grad(W, X, Y, theta1, theta2, H)

    def prox(V, step):
        return group_rows_prox(V, step * delta)

    def penalty(W):
        return delta * float(np.linalg.norm(W, axis=1).sum())

    W0 = np.zeros((X.shape[1], Y.shape[1]))
    res = fista(smooth, prox, W0, cfg, penalty)
    res.solver = "tgl"
    res.config = cfg.to_dict()
    return res


def cfsgl_objective(W, X, Y, theta1, theta2, delta):
    resid = X @ W - Y
    return float(np.vdot(resid, resid) + theta1 * np.abs(W).sum()
                 + theta2 * np.abs(np.diff(W, axis=1)).sum()
                 + delta * np.linalg.norm(W, axis=1).sum())


def fit_cfsgl(X, Y, theta1, theta2, delta, config=None):
    """Convex Fused Sparse Group Lasso.

    ``||XW-Y||^2 + theta1 ||W||_1 + theta2 ||RW^T||_1 + delta ||W||_{2,1}``,
    with the fused term penalising adjacent-task differences of each row.
    """
    X, Y = _check_shapes(X, Y)
    cfg = _default_config(config, theta1=theta1, theta2=theta2, delta=delta)

    def smooth(W):
        return smooth_objective_and_grad(W, X, Y)

    def prox(V, step):
        return fsgl_rows_prox(V, step * theta1, step * theta2, step * delta)

    def penalty(W):
        return float(theta1 * np.abs(W).sum()
                     + theta2 * np.abs(np.diff(W, axis=1)).sum()
                     + delta * np.linalg.norm(W, axis=1).sum())

    W0 = np.zeros((X.shape[1], Y.shape[1]))
    res = fista(smooth, prox, W0, cfg, penalty)
    res.solver = "cfsgl"
    res.config = cfg.to_dict()
    return res


SOLVERS = {"lasso", "ridge", "tgl", "cfsgl"}
_PENALTY_NAMES = {"lasso": {"lam"}, "ridge": {"lam"},
                  "tgl": {"theta1", "theta2", "delta"}, "cfsgl": {"theta1", "theta2", "delta"}}


def fit(solver, X, Y, penalties, config=None):
    """Dispatch by solver name; ``penalties`` is a mapping of named reals."""
    solver = solver.lower()
    p = dict(penalties)
    allowed = _PENALTY_NAMES.get(solver)
    if allowed is not None and set(p) - allowed:
        raise ConfigError(f"{solver} takes penalties {sorted(allowed)}, got "
                          f"{sorted(set(p) - allowed)}")
    if solver == "ridge":
        return fit_ridge(X, Y, p.get("lam", 0.0))
    if solver == "lasso":
        return fit_lasso(X, Y, p.get("lam", 0.0), config)
    if solver == "tgl":
        return fit_tgl(X, Y, p.get("theta1", 0.0), p.get("theta2", 0.0),
                       p.get("delta", 0.0), config)
    if solver == "cfsgl":
        return fit_cfsgl(X, Y, p.get("theta1", 0.0), p.get("theta2", 0.0),
                         p.get("delta", 0.0), config)
    raise ValueError(f"unknown solver {solver!r}; expected one of {sorted(SOLVERS)}")
