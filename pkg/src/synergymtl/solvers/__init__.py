from .fista import FitResult, SolverConfig, fista
from .models import (
    SOLVERS,
    cfsgl_objective,
    fit,
    fit_cfsgl,
    fit_lasso,
    fit_ridge,
    fit_tgl,
    smooth_objective_and_grad,
    temporal_difference_ops,
    tgl_objective,
)
from .prox import (
    fsgl_prox,
    fsgl_rows_prox,
    fused_prox_1d,
    fused_rows_prox,
    group_row_prox,
    group_rows_prox,
    soft_threshold,
)

__all__ = [
    "FitResult", "SolverConfig", "fista", "SOLVERS", "fit", "fit_cfsgl",
    "fit_lasso", "fit_ridge", "fit_tgl", "cfsgl_objective", "tgl_objective",
    "smooth_objective_and_grad", "temporal_difference_ops", "fsgl_prox",
    "fsgl_rows_prox", "fused_prox_1d", "fused_rows_prox", "group_row_prox",
    "group_rows_prox", "soft_threshold",
]
