import numpy as np
import pytest

from oracles import cd_lasso, finite_difference_grad, kron_tgl, tgl_smooth_value
from synergymtl.errors import ConfigError, DimensionError, DivergenceError, SingularityError
from synergymtl.solvers import (
    FitResult,
    SolverConfig,
    cfsgl_objective,
    fista,
    fit,
    fit_cfsgl,
    fit_lasso,
    fit_ridge,
    fit_tgl,
    smooth_objective_and_grad,
    temporal_difference_ops,
)

TIGHT = SolverConfig(tol=1e-14, max_iter=100_000)


def make_instance(seed, n=50, d=20, k=3, noise=0.3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    W = np.zeros((d, k))
    W[: d // 4] = rng.standard_normal((d // 4, 1)) + 0.1 * rng.standard_normal((d // 4, k))
    Y = X @ W + noise * rng.standard_normal((n, k))
    return X, Y


def lstsq(X, Y):
    return np.linalg.solve(X.T @ X, X.T @ Y)


# -- temporal difference encodings ------------------------------------------

def test_difference_ops_layout():
    H, R = temporal_difference_ops(4)
    assert H.shape == (4, 3) and R.shape == (3, 4)
    W = np.arange(12.0).reshape(3, 4) ** 2
    np.testing.assert_array_equal((W @ H)[:, 1], W[:, 1] - W[:, 2])
    np.testing.assert_array_equal((R @ W.T)[2], W[:, 2] - W[:, 3])


def test_difference_ops_norms_agree():
    rng = np.random.default_rng(0)
    for k in range(1, 7):
        H, R = temporal_difference_ops(k)
        for _ in range(20):
            W = rng.normal(size=(5, k))
            assert np.isclose(np.linalg.norm(W @ H), np.linalg.norm(R @ W.T), rtol=0, atol=1e-12)


# -- smooth part -------------------------------------------------------------

def test_smooth_at_zero():
    X, Y = make_instance(1)
    v, g = smooth_objective_and_grad(np.zeros((20, 3)), X, Y)
    assert v == pytest.approx(np.sum(Y ** 2))
    np.testing.assert_allclose(g, -2 * X.T @ Y)


def test_smooth_gradient_vanishes_at_least_squares():
    X, Y = make_instance(2)
    _, g = smooth_objective_and_grad(lstsq(X, Y), X, Y)
    assert np.abs(g).max() <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_smooth_gradient_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    X = rng.standard_normal((12, 5))
    Y = rng.standard_normal((12, 4))
    W = rng.standard_normal((5, 4))
    t1, t2 = rng.uniform(0, 3, 2)
    _, g = smooth_objective_and_grad(W, X, Y, t1, t2)
    fd = finite_difference_grad(lambda V: tgl_smooth_value(V, X, Y, t1, t2), W)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_smooth_shape_mismatch():
    with pytest.raises(DimensionError):
        smooth_objective_and_grad(np.zeros((3, 2)), np.zeros((4, 3)), np.zeros((5, 2)))


# -- FISTA engine -------------------------------------------------------------

def _quadratic(seed=0, d=6):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    A = M @ M.T + 0.5 * np.eye(d)
    b = rng.standard_normal((d, 2))

    def smooth(W):
        return 0.5 * float(np.vdot(W, A @ W)) - float(np.vdot(b, W)), A @ W - b

    return smooth, np.linalg.solve(A, b)


def identity_prox(V, step):
    return V


@pytest.mark.parametrize("seed", range(5))
def test_fista_reaches_quadratic_minimiser(seed):
    # the objective flattens below float resolution long before the iterate
    # settles, so give the engine its full 500-step budget
    smooth, W_star = _quadratic(seed)
    res = fista(smooth, identity_prox, np.zeros_like(W_star), SolverConfig(tol=0.0, max_iter=500))
    assert res.iterations <= 500
    assert np.abs(res.W - W_star).max() < 1e-8


def test_fista_zero_tol_runs_to_max_iter():
    smooth, W_star = _quadratic(1)
    res = fista(smooth, identity_prox, np.zeros_like(W_star), SolverConfig(tol=0.0, max_iter=37))
    assert res.iterations == 37 and not res.converged


def test_fista_fixed_point_start():
    smooth, W_star = _quadratic(2)
    res = fista(smooth, identity_prox, W_star, SolverConfig())
    assert res.converged and res.iterations <= 2


def test_fista_best_so_far_non_increasing_and_trace_matches():
    X, Y = make_instance(3)
    res = fit_cfsgl(X, Y, 2.0, 5.0, 3.0, SolverConfig(tol=1e-10))
    best = np.minimum.accumulate(res.objective_trace)
    assert np.all(np.diff(best) <= 0)
    assert abs(res.objective_trace[-1] - cfsgl_objective(res.W, X, Y, 2.0, 5.0, 3.0)) <= 1e-12 * max(1, abs(res.objective))


def test_fista_divergence_is_reported():
    def smooth(W):
        return float("nan"), np.zeros_like(W)

    with pytest.raises(DivergenceError):
        fista(smooth, identity_prox, np.zeros((2, 2)), SolverConfig())


def test_solver_config_rejects_negative_penalty():
    with pytest.raises(ConfigError):
        SolverConfig(penalties={"delta": -1.0})


def test_fit_result_round_trip():
    X, Y = make_instance(4)
    res = fit_tgl(X, Y, 0.1, 0.5, 2.0)
    back = FitResult.from_dict(res.to_dict())
    np.testing.assert_array_equal(back.W, res.W)
    assert back.objective_trace == res.objective_trace


# -- ridge ---------------------------------------------------------------------

def test_ridge_examples():
    X = np.array([[1.0], [2.0]])
    y = np.array([1.0, 2.0])
    assert fit_ridge(X, y, 0.0).W[0, 0] == pytest.approx(1.0)
    assert fit_ridge(X, y, 5.0).W[0, 0] == pytest.approx(0.5)


def test_ridge_monotone_shrinkage():
    X, Y = make_instance(5)
    norms = [np.linalg.norm(fit_ridge(X, Y, lam).W) for lam in np.geomspace(1e-3, 1e6, 12)]
    assert np.all(np.diff(norms) < 0)
    assert norms[-1] < 1e-3


def test_ridge_singular_without_penalty():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularityError):
        fit_ridge(X, np.ones(3), 0.0)


# -- lasso -------------------------------------------------------------------

def test_lasso_zero_above_threshold():
    X, Y = make_instance(6)
    X = (X - X.mean(0)) / X.std(0)
    Y = Y - Y.mean(0)
    lam = 2 * np.abs(X.T @ Y).max()
    res = fit_lasso(X, Y, lam)
    assert np.all(res.W == 0)


def test_lasso_no_penalty_is_least_squares():
    X, Y = make_instance(7, n=40, d=8)
    res = fit_lasso(X, Y, 0.0, TIGHT)
    assert np.abs(res.W - lstsq(X, Y)).max() < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_lasso_matches_coordinate_descent(seed):
    rng = np.random.default_rng(200 + seed)
    X = rng.standard_normal((30, 10))
    y = X[:, :3] @ rng.standard_normal(3) + 0.5 * rng.standard_normal(30)
    lam = 4.0
    res = fit_lasso(X, y, lam, TIGHT)
    w = cd_lasso(X, y, lam)
    ref = np.sum((X @ w - y) ** 2) + lam * np.abs(w).sum()
    assert abs(res.objective - ref) < 1e-8


# -- TGL -------------------------------------------------------------------------

def test_tgl_reduces_to_ridge():
    X, Y = make_instance(8)
    np.testing.assert_allclose(fit_tgl(X, Y, 0.7, 0, 0).W, fit_ridge(X, Y, 0.7).W, atol=1e-10)


@pytest.mark.parametrize("theta1, theta2", [(0.0, 1.0), (0.5, 10.0), (2.0, 0.1)])
def test_tgl_direct_matches_kron_system(theta1, theta2):
    X, Y = make_instance(9, n=30, d=6, k=4)
    np.testing.assert_allclose(fit_tgl(X, Y, theta1, theta2, 0).W, kron_tgl(X, Y, theta1, theta2),
                               atol=1e-6)


def test_tgl_strong_smoothing_equalises_columns():
    X, Y = make_instance(10)
    X = (X - X.mean(0)) / X.std(0)
    H, _ = temporal_difference_ops(3)
    W = fit_tgl(X, Y, 0.0, 1e6, 0.0).W
    assert np.linalg.norm(W @ H) < 1e-3 * np.linalg.norm(W)


def test_tgl_group_penalty_zeroes_rows():
    X, Y = make_instance(11)
    W = fit_tgl(X, Y, 0.0, 0.0, 60.0).W
    row_norms = np.linalg.norm(W, axis=1)
    assert np.all((row_norms == 0) | (np.abs(W).min(axis=1) > 0))
    assert (row_norms == 0).sum() > 0


def test_tgl_fista_path_matches_direct_when_delta_tiny():
    X, Y = make_instance(12)
    direct = fit_tgl(X, Y, 0.3, 2.0, 0.0).W
    iterative = fit_tgl(X, Y, 0.3, 2.0, 1e-9, TIGHT).W
    assert np.abs(direct - iterative).max() < 1e-6


# -- cFSGL -------------------------------------------------------------------------

def test_cfsgl_no_penalty_is_least_squares():
    X, Y = make_instance(13, n=40, d=8)
    assert np.abs(fit_cfsgl(X, Y, 0, 0, 0, TIGHT).W - lstsq(X, Y)).max() < 1e-6


def test_cfsgl_reduces_to_lasso():
    X, Y = make_instance(14, n=40, d=12, k=2)
    a = fit_cfsgl(X, Y, 3.0, 0.0, 0.0, TIGHT)
    b = fit_lasso(X, Y, 3.0, TIGHT)
    assert abs(a.objective - b.objective) < 1e-8


def test_cfsgl_strong_fusion():
    X, Y = make_instance(15)
    X = (X - X.mean(0)) / X.std(0)
    _, R = temporal_difference_ops(3)
    W = fit_cfsgl(X, Y, 0.5, 1e4, 0.5, TIGHT).W
    assert np.abs(R @ W.T).sum() <= 1e-6


def test_fits_are_deterministic():
    X, Y = make_instance(16)
    a = fit("cfsgl", X, Y, {"theta1": 1.0, "theta2": 2.0, "delta": 3.0})
    b = fit("cfsgl", X, Y, {"theta1": 1.0, "theta2": 2.0, "delta": 3.0})
    assert a.W.tobytes() == b.W.tobytes()


def test_fit_dispatch_rejects_unknown_solver():
    with pytest.raises(ValueError):
        fit("elastic", np.zeros((3, 2)), np.zeros(3), {})


def test_fit_dispatch_rejects_foreign_penalties():
    with pytest.raises(ConfigError):
        fit("ridge", np.eye(3), np.ones(3), {"lambda": 1.0})
