import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagsynth.sgl import (
    HyperParams,
    SglModel,
    SolverOptions,
    fit_sgl,
    kkt_residual,
    lambda_max,
    predict,
    sgl_objective,
    sgl_penalty,
    sgl_prox,
)

from oracles import cd_lasso, grid_prox, sgl_prox_objective, sgl_subgradient_residual


# ---------------------------------------------------------------- prox


def test_prox_identity_at_zero_lambda(rng):
    v = rng.standard_normal(7)
    np.testing.assert_array_equal(sgl_prox(v, 0.3, HyperParams(0.0, 0.4), [0, 0, 1, 1, 1, 2, 2]), v)


def test_prox_pure_soft_threshold():
    out = sgl_prox([3.0, -0.5], 1.0, HyperParams(1.0, 1.0), [0, 1])
    np.testing.assert_array_equal(out, [2.0, 0.0])


def test_prox_single_group_example():
    v = np.array([3.0, 4.0])
    x = sgl_prox(v, 1.0, HyperParams(1.0, 0.5), [0, 0])
    assert sgl_subgradient_residual(x, v, 1.0, 1.0, 0.5, [0, 0]) < 1e-12
    g, gval = grid_prox(v, 1.0, 1.0, 0.5, [0, 0])
    assert sgl_prox_objective(x, v, 1.0, 1.0, 0.5, [0, 0]) <= gval + 1e-12
    assert np.linalg.norm(x - g) < 2e-3


def test_prox_zeroes_whole_group():
    x = sgl_prox([0.3, -0.2, 5.0], 1.0, HyperParams(1.0, 0.2), [0, 0, 1])
    assert x[0] == 0.0 and x[1] == 0.0 and x[2] > 0


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    st.floats(0.05, 2.0),
    st.floats(0.0, 1.0),
    st.floats(0.2, 1.5),
    st.sampled_from([[0, 0], [0, 1]]),
)
def test_prox_beats_grid_search_2d(v, lam, alpha, step, groups):
    v = np.array(v)
    x = sgl_prox(v, step, HyperParams(lam, alpha), groups)
    _, gval = grid_prox(v, step, lam, alpha, groups)
    assert sgl_prox_objective(x, v, step, lam, alpha, groups) <= gval + 1e-12
    assert sgl_subgradient_residual(x, v, step, lam, alpha, groups) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(3, 4))
def test_prox_optimal_in_higher_dims(seed, dim):
    r = np.random.default_rng(seed)
    v = r.normal(0, 2, dim)
    groups = r.integers(0, 2, dim)
    lam, alpha, step = r.uniform(0.05, 2), r.uniform(0, 1), r.uniform(0.2, 1.5)
    x = sgl_prox(v, step, HyperParams(lam, alpha), groups)
    assert sgl_subgradient_residual(x, v, step, lam, alpha, groups) < 1e-6
    _, gval = grid_prox(v, step, lam, alpha, groups)
    assert sgl_prox_objective(x, v, step, lam, alpha, groups) <= gval + 1e-12


def test_prox_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        sgl_prox([1.0], 0.0, HyperParams(1.0, 0.5), [0])


def test_hyperparams_validated():
    with pytest.raises(ValueError):
        HyperParams(-1.0, 0.5)
    with pytest.raises(ValueError):
        HyperParams(1.0, 1.5)


# ---------------------------------------------------------------- fit


def test_zero_lambda_matches_normal_equations(rng):
    X = rng.standard_normal((50, 5))
    y = X @ [1.0, -2.0, 0.5, 0.0, 3.0] + 0.1 * rng.standard_normal(50) + 4.0
    A = np.column_stack([np.ones(50), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    m = fit_sgl(X, y, HyperParams(0.0, 0.5), SolverOptions(tol=1e-10))
    np.testing.assert_allclose(m.coeffs, beta[1:], atol=1e-6)
    assert m.intercept == pytest.approx(beta[0], abs=1e-6)
    assert m.diag.converged


def test_alpha_one_matches_coordinate_descent(rng):
    X = rng.standard_normal((20, 8))
    y = X[:, :3] @ [2.0, -1.0, 0.5] + 0.3 * rng.standard_normal(20)
    lam = 0.1
    b_cd = cd_lasso(X, y, lam)
    m = fit_sgl(X, y, HyperParams(lam, 1.0), SolverOptions(tol=1e-10), groups=[0, 0, 1, 1, 2, 2, 3, 3])
    hp = HyperParams(lam, 1.0)
    f_cd = sgl_objective(X, y, b_cd, hp, groups=np.arange(8))
    f_sgl = sgl_objective(X, y, m.coeffs, hp, groups=np.arange(8))
    assert abs(f_sgl - f_cd) < 1e-5


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.7, 1.0])
def test_lambda_max_gives_all_zero(rng, alpha):
    X = rng.standard_normal((40, 9))
    y = X[:, 0] - X[:, 4] + rng.standard_normal(40)
    groups = np.repeat([0, 1, 2], 3)
    lmax = lambda_max(X, y, alpha, groups)
    m = fit_sgl(X, y, HyperParams(lmax * 1.0001, alpha), groups=groups)
    assert np.all(m.coeffs == 0.0)
    assert m.intercept == pytest.approx(y.mean())
    m = fit_sgl(X, y, HyperParams(lmax * 0.99, alpha), groups=groups)
    assert np.any(m.coeffs != 0.0)


def test_lambda_max_lasso_formula(rng):
    X = rng.standard_normal((30, 6))
    y = rng.standard_normal(30)
    expected = np.max(np.abs((X - X.mean(0)).T @ (y - y.mean()))) / 30
    assert lambda_max(X, y, 1.0) == pytest.approx(expected, rel=1e-12)
    # the alpha = 1 bound dominates every alpha
    groups = np.repeat([0, 1], 3)
    for a in (0.0, 0.25, 0.5, 0.9):
        assert lambda_max(X, y, a, groups) <= lambda_max(X, y, 1.0, groups) * (1 + 1e-12)


def test_lambda_max_orthogonal_target():
    X = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    y = np.array([1.0, 1, 1, 1])
    assert lambda_max(X, y, 0.5, [0, 0]) == 0.0


def test_solver_reports_nonconvergence(rng):
    X = rng.standard_normal((30, 40))
    y = rng.standard_normal(30)
    m = fit_sgl(X, y, HyperParams(1e-6, 0.5), SolverOptions(max_iter=3, rel_obj_tol=0.0), groups=np.repeat(range(4), 10))
    assert not m.diag.converged
    assert m.diag.iterations == 3
    assert m.diag.kkt > 0


def test_objective_monotone_in_debug_mode(rng):
    X = rng.standard_normal((60, 30))
    y = X[:, :5].sum(1) + rng.standard_normal(60)
    m = fit_sgl(X, y, HyperParams(0.05, 0.4), SolverOptions(debug=True), groups=np.repeat(range(6), 5))
    assert np.all(np.diff(m.diag.objective_trace) <= 0)
    assert m.diag.converged


def test_warm_start_reaches_same_solution(rng):
    X = rng.standard_normal((60, 12))
    y = X[:, 0] + rng.standard_normal(60)
    hp = HyperParams(0.05, 0.5)
    g = np.repeat(range(4), 3)
    cold = fit_sgl(X, y, hp, SolverOptions(tol=1e-10), groups=g)
    warm = fit_sgl(X, y, hp, SolverOptions(tol=1e-10), groups=g, init=rng.standard_normal(12))
    np.testing.assert_allclose(warm.coeffs, cold.coeffs, atol=1e-7)


def test_fit_rejects_mismatched_rows():
    with pytest.raises(ValueError):
        fit_sgl(np.zeros((5, 2)), np.zeros(4), HyperParams(1.0, 0.5))


def test_fit_speed_on_solver_oracles(rng):
    t0 = time.perf_counter()
    X = rng.standard_normal((50, 5))
    fit_sgl(X, rng.standard_normal(50), HyperParams(0.0, 0.5))
    X = rng.standard_normal((20, 8))
    fit_sgl(X, rng.standard_normal(20), HyperParams(0.1, 1.0))
    assert time.perf_counter() - t0 < 5.0


# ---------------------------------------------------------------- predict / KKT


def test_predict_affine_and_constant():
    m = SglModel(1.0, np.array([2.0]), HyperParams(0.0, 0.5), None)
    np.testing.assert_array_equal(predict(m, np.array([[1.0], [2.0], [3.0]])), [3.0, 5.0, 7.0])
    z = SglModel(-0.5, np.zeros(3), HyperParams(0.0, 0.5), None)
    np.testing.assert_array_equal(predict(z, np.ones((4, 3))), -0.5)


def test_predict_matches_naive_matvec(rng):
    X = rng.standard_normal((25, 7))
    m = SglModel(0.3, rng.standard_normal(7), HyperParams(0.0, 0.5), None)
    naive = [m.intercept + sum(X[i, j] * m.coeffs[j] for j in range(7)) for i in range(25)]
    np.testing.assert_allclose(predict(m, X), naive, atol=1e-12)
    with pytest.raises(ValueError):
        predict(m, X[:, :6])


def test_kkt_residual_cases(rng):
    X = rng.standard_normal((40, 4))
    y = X @ [1.0, 0.0, -1.0, 2.0] + rng.standard_normal(40)
    A = np.column_stack([np.ones(40), X])
    beta = np.linalg.lstsq(A, y, rcond=None)[0]
    ols = SglModel(beta[0], beta[1:], HyperParams(0.0, 0.5), None)
    assert kkt_residual(ols, X, y) < 1e-8
    hp = HyperParams(lambda_max(X, y, 0.5, [0, 0, 1, 1]), 0.5)
    zero = SglModel(y.mean(), np.zeros(4), hp, None)
    assert kkt_residual(zero, X, y, groups=[0, 0, 1, 1]) < 1e-8
    hp = HyperParams(0.1, 0.5)
    opt = fit_sgl(X, y, hp, SolverOptions(tol=1e-12), groups=[0, 0, 1, 1])
    base = kkt_residual(opt, X, y, groups=[0, 0, 1, 1])
    bumped = SglModel(opt.intercept, opt.coeffs + [0.1, 0, 0, 0], hp, None)
    assert kkt_residual(bumped, X, y, groups=[0, 0, 1, 1]) > base


def test_penalty_value():
    hp = HyperParams(2.0, 0.25)
    b = np.array([3.0, 4.0, -1.0])
    expected = 2.0 * 0.75 * (np.sqrt(2) * 5.0 + 1.0) + 2.0 * 0.25 * 8.0
    assert sgl_penalty(b, hp, [0, 0, 1]) == pytest.approx(expected)
