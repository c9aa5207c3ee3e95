"""Accelerated proximal gradient with backtracking and adaptive restart."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError


@dataclass
class SolverConfig:
    """Penalties plus iteration controls shared by every solver.

    ``penalties`` keys: ``lam`` (lasso / ridge), ``theta1``, ``theta2``,
    ``delta`` (TGL / cFSGL).
    """

    penalties: dict = field(default_factory=dict)
    max_iter: int = 10_000
    tol: float = 1e-6
    step0: float = 1.0
    shrink: float = 0.5

    def __post_init__(self):
        for name, value in self.penalties.items():
            if not value >= 0:
                raise ConfigError(f"penalty {name} must be >= 0, got {value}")
        if self.tol < 0:
            raise ConfigError("tol must be >= 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")
        if not 0 < self.shrink < 1 or self.step0 <= 0:
            raise ConfigError("line search needs step0 > 0 and 0 < shrink < 1")

    def penalty(self, name, default=0.0):
        return float(self.penalties.get(name, default))

    def to_dict(self):
        return {
            "penalties": {k: float(v) for k, v in sorted(self.penalties.items())},
            "max_iter": self.max_iter,
            "tol": self.tol,
            "step0": self.step0,
            "shrink": self.shrink,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            penalties=dict(data.get("penalties", {})),
            max_iter=int(data.get("max_iter", 10_000)),
            tol=float(data.get("tol", 1e-6)),
            step0=float(data.get("step0", 1.0)),
            shrink=float(data.get("shrink", 0.5)),
        )


@dataclass
class FitResult:
    W: np.ndarray
    objective_trace: list
    iterations: int
    converged: bool
    solver: str = ""
    config: dict = field(default_factory=dict)

    @property
    def objective(self):
        return self.objective_trace[-1]

    def to_dict(self):
        return {
            "solver": self.solver,
            "config": self.config,
            "shape": list(self.W.shape),
            "W": self.W.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "objective_trace": [float(v) for v in self.objective_trace],
        }

    @classmethod
    def from_dict(cls, data):
        W = np.asarray(data["W"], dtype=float).reshape(data["shape"])
        return cls(W=W, objective_trace=list(data["objective_trace"]),
                   iterations=int(data["iterations"]),
                   converged=bool(data["converged"]),
                   solver=data.get("solver", ""), config=data.get("config", {}))


def fista(smooth_fn, prox_fn, W0, config, penalty_fn=None):
    """Minimize ``f(W) + g(W)`` by FISTA.

    Parameters
    ----------
    smooth_fn : callable
        ``smooth_fn(W) -> (f(W), grad f(W))``.
    prox_fn : callable
        ``prox_fn(V, step)`` returns ``argmin_W g(W) + ||W - V||^2 / (2 step)``.
    W0 : ndarray
        Starting point.
    config : SolverConfig
        ``step0`` / ``shrink`` drive the backtracking line search; the run
        stops once the relative objective change drops below ``tol``.
    penalty_fn : callable, optional
        ``g(W)``; only used for the objective trace. Defaults to zero.

    Returns
    -------
    FitResult
    """
    if penalty_fn is None:
        def penalty_fn(W):
            return 0.0

    x = np.array(W0, dtype=float, copy=True)
    f_x, _ = smooth_fn(x)
    F_x = f_x + penalty_fn(x)
    if not np.isfinite(F_x):
        raise DivergenceError("objective is not finite at the starting point")
    trace = [float(F_x)]
    y = x
    t = 1.0
    step = config.step0
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        f_y, g_y = smooth_fn(y)
        while True:
            x_new = prox_fn(y - step * g_y, step)
            diff = x_new - y
            f_new, _ = smooth_fn(x_new)
            if not np.isfinite(f_new):
                if step < 1e-300:
                    raise DivergenceError(f"non-finite objective at iteration {it}")
            elif f_new <= f_y + np.vdot(g_y, diff) + np.vdot(diff, diff) / (2 * step) \
                    + 1e-12 * abs(f_y):
                break
            step *= config.shrink
            if step < 1e-300:
                raise DivergenceError("line search failed to find a descent step")
        F_new = f_new + penalty_fn(x_new)
        if not np.isfinite(F_new):
            raise DivergenceError(f"non-finite objective at iteration {it}")
        trace.append(float(F_new))
        restarted = F_new > F_x
        change = abs(F_x - F_new) / max(abs(F_x), np.finfo(float).tiny)
        if restarted:
            t = 1.0
            y = x_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x, F_x = x_new, F_new
        if not restarted and change < config.tol:
            converged = True
            break
    return FitResult(W=x, objective_trace=trace, iterations=it, converged=converged)
