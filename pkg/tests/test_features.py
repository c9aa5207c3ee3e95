import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from synergymtl.errors import (
    CovarianceError,
    DimensionError,
    InsufficientDataError,
    OrderingError,
    ZeroBaselineError,
)
from synergymtl.features import (
    DAYS_PER_MONTH,
    build_pair_features,
    cosine_similarity,
    euclidean_distance,
    mahalanobis_distance,
    original_features,
    pair_indices,
    read_design_csv,
    standardize,
    trend_array,
    trend_vector,
    write_design_csv,
)

vec = arrays(float, 2, elements=st.floats(-50, 50, allow_nan=False))
scale = st.floats(1e-3, 1e3)


# -- trend vectors -------------------------------------------------------------

def test_trend_vector_examples():
    m, v = trend_vector(100, 90, 182.625)
    assert m == pytest.approx(-0.10, abs=1e-15)
    assert v == pytest.approx(-10 / 6, abs=1e-12)
    assert trend_vector(50, 50, 90) == (0.0, 0.0)
    assert trend_vector(100, 90, 183).velocity == pytest.approx(-1.6632513661202184, abs=1e-12)


def test_trend_vector_velocity_keeps_sign():
    assert trend_vector(10, 12, 30).velocity > 0
    assert trend_vector(10, 8, 30).velocity < 0


def test_trend_vector_errors():
    with pytest.raises(ZeroBaselineError):
        trend_vector(0, 1, 30)
    with pytest.raises(OrderingError):
        trend_vector(1, 2, 0)


def test_trend_array_matches_scalar_and_handles_zero_baseline():
    rng = np.random.default_rng(0)
    bl = rng.uniform(1, 5, (4, 3))
    fu = bl + rng.normal(size=(4, 3))
    dt = rng.uniform(100, 400, 4)
    T = trend_array(bl, fu, dt)
    for i in range(4):
        for j in range(3):
            np.testing.assert_allclose(T[i, j], trend_vector(bl[i, j], fu[i, j], dt[i]), rtol=1e-14)
    bl[1, 2] = 0.0
    with pytest.warns(RuntimeWarning):
        T = trend_array(bl, fu, dt)
    assert T[1, 2, 0] == 0.0
    assert T[1, 2, 1] == pytest.approx(fu[1, 2] / (dt[1] / DAYS_PER_MONTH))


# -- similarity measures ----------------------------------------------------------

def test_cosine_examples():
    assert cosine_similarity((1, 0), (0, 1)) == 0.0
    assert cosine_similarity((2, 4), (1, 2)) == pytest.approx(1.0, abs=1e-15)
    assert cosine_similarity((1, 1), (1, 0)) == pytest.approx(np.sqrt(0.5), abs=1e-15)
    assert cosine_similarity((0, 0), (1, 2)) == 0.0


def test_euclidean_examples():
    assert euclidean_distance((0, 0), (3, 4)) == 5.0
    assert euclidean_distance((1, 2), (1, 2)) == 0.0
    assert euclidean_distance((1, 2), (4, 6)) == 5.0


def test_mahalanobis_examples():
    assert mahalanobis_distance((0, 0), (3, 4), np.eye(2)) == pytest.approx(5.0)
    assert mahalanobis_distance((1, -2), (1, -2), [[2, 0.5], [0.5, 1]]) == 0.0
    assert mahalanobis_distance((0, 0), (2, 0), np.diag([4.0, 1.0])) == pytest.approx(1.0)
    with pytest.raises(CovarianceError):
        mahalanobis_distance((0, 0), (1, 1), [[1, 2], [2, 1]])


@settings(max_examples=200, deadline=None)
@given(vec, vec, scale, scale)
def test_cosine_scale_invariant_symmetric_bounded(u, v, a, b):
    s = cosine_similarity(u, v)
    assert -1 <= s <= 1
    assert s == cosine_similarity(v, u)
    if np.linalg.norm(u) > 1e-6 and np.linalg.norm(v) > 1e-6:
        assert abs(cosine_similarity(a * u, b * v) - s) <= 1e-12


def _spd(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(2, 2))
    return M @ M.T + 0.1 * np.eye(2)


@settings(max_examples=200, deadline=None)
@given(vec, vec, vec, st.integers(0, 10_000))
def test_distances_are_metrics(u, v, w, seed):
    cov = _spd(seed)
    for dist in (euclidean_distance, lambda x, y: mahalanobis_distance(x, y, cov)):
        assert dist(u, u) == 0.0
        assert dist(u, v) == pytest.approx(dist(v, u), rel=1e-12, abs=1e-12)
        assert dist(u, w) <= dist(u, v) + dist(v, w) + 1e-9
    assert abs(mahalanobis_distance(u, v, np.eye(2)) - euclidean_distance(u, v)) <= 1e-12 * max(
        1.0, euclidean_distance(u, v))


# -- pair design ---------------------------------------------------------------------

def test_pair_counts():
    for r in range(2, 51):
        a, b = pair_indices(r)
        assert len(a) == r * (r - 1) // 2
        assert np.all(a < b)
    assert len(pair_indices(326)[0]) == 52975
    assert len(pair_indices(3)[0]) == 3 and len(pair_indices(4)[0]) == 6
    with pytest.raises(DimensionError):
        pair_indices(1)


def test_pair_order_is_lexicographic():
    a, b = pair_indices(5)
    pairs = list(zip(a.tolist(), b.tolist()))
    assert pairs == sorted(pairs)
    assert len(set(pairs)) == len(pairs)


@pytest.mark.parametrize("r", [2, 3, 7])
def test_build_pair_features_shape(r):
    rng = np.random.default_rng(r)
    T = rng.normal(size=(6, r, 2))
    for measure in ("cosine", "euclidean", "mahalanobis"):
        X = build_pair_features(T, measure)
        assert X.values.shape == (6, r * (r - 1) // 2)


def test_single_pair_cosine():
    X = build_pair_features(np.array([[[1.0, 0.0], [1.0, 0.0]]]), "cosine", ["A", "B"])
    assert X.values.tolist() == [[1.0]]
    assert X.column_names == ["A-B"]


def test_pair_features_match_scalar_functions():
    rng = np.random.default_rng(7)
    T = rng.normal(size=(9, 4, 2))
    T[2, 1] = 0.0
    a, b = pair_indices(4)
    cos = build_pair_features(T, "cosine").values
    euc = build_pair_features(T, "euclidean").values
    mah = build_pair_features(T, "mahalanobis").values
    for c, (i, j) in enumerate(zip(a, b)):
        pooled = np.vstack([T[:, i], T[:, j]])
        cov = np.cov(pooled.T)
        cov = cov + 1e-6 * np.trace(cov) / 2 * np.eye(2)
        for n in range(9):
            assert cos[n, c] == pytest.approx(cosine_similarity(T[n, i], T[n, j]), abs=1e-12)
            assert euc[n, c] == pytest.approx(euclidean_distance(T[n, i], T[n, j]), abs=1e-12)
            assert mah[n, c] == pytest.approx(mahalanobis_distance(T[n, i], T[n, j], cov), abs=1e-10)


def test_pair_features_chunking_invariant():
    rng = np.random.default_rng(8)
    T = rng.normal(size=(20, 5, 2))
    for measure in ("cosine", "euclidean", "mahalanobis"):
        np.testing.assert_array_equal(build_pair_features(T, measure, chunk=3).values,
                                      build_pair_features(T, measure, chunk=64).values)


def test_mahalanobis_needs_rows_and_variance():
    with pytest.raises(InsufficientDataError):
        build_pair_features(np.ones((2, 3, 2)), "mahalanobis")
    with pytest.raises(CovarianceError):
        build_pair_features(np.ones((5, 3, 2)), "mahalanobis")


def test_unknown_measure():
    with pytest.raises(ValueError):
        build_pair_features(np.ones((2, 3, 2)), "manhattan")


# -- standardization -------------------------------------------------------------------

def test_standardize_examples():
    X = np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]])[[0, 1]]
    Y = np.array([[10.0], [20.0]])
    Xs, Ys, stats = standardize(X, Y)
    np.testing.assert_allclose(Xs[:, 0], [-1, 1])
    np.testing.assert_array_equal(Xs[:, 1], [0, 0])
    assert stats.constant.tolist() == [False, True]
    _, Ys3, _ = standardize(np.ones((3, 1)), np.array([10.0, 20.0, 30.0]))
    np.testing.assert_allclose(Ys3[:, 0], [-10, 0, 10])


def test_standardize_moments_and_round_trip():
    rng = np.random.default_rng(9)
    X = rng.normal(3, 4, (40, 6))
    Y = rng.normal(10, 2, (40, 3))
    Xs, Ys, stats = standardize(X, Y)
    assert np.abs(Xs.mean(0)).max() < 1e-10
    assert np.abs(Xs.std(0) - 1).max() < 1e-10
    P = rng.normal(size=(40, 3))
    np.testing.assert_allclose(stats.transform_Y(stats.inverse_Y(P)), P, atol=1e-10)


def test_standardize_design_matrix_keeps_names():
    X = original_features(np.arange(12.0).reshape(4, 3) ** 2, ["a", "b", "c"])
    Xs, _, stats = standardize(X, np.zeros(4))
    assert Xs.column_names == ["a", "b", "c"] and Xs.standardization is stats


def test_design_csv_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    X = build_pair_features(rng.normal(size=(5, 4, 2)), "cosine", list("ABCD"))
    path = tmp_path / "design.csv"
    write_design_csv(path, X, [f"s{i}" for i in range(5)])
    back, ids = read_design_csv(path)
    assert ids == [f"s{i}" for i in range(5)]
    assert back.column_names == X.column_names
    np.testing.assert_array_equal(back.values, X.values)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        write_design_csv(tmp_path / "plain.csv", X)
    assert read_design_csv(tmp_path / "plain.csv")[1] is None
