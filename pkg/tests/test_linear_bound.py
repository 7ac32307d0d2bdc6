"""Fundamental-matrix series and the closed-form affine path."""

import numpy as np
import pytest

from driftlab import DriftSpec, TimeGrid, sample_increments
from driftlab.errors import ConfigurationError, InputError
from driftlab.integrate import euler_maruyama
from driftlab.linear_bound import (
    FundamentalMatrixSeries,
    LinearDriftParams,
    fundamental_matrix,
    linear_solution_path,
    matrix_ode_check,
    rk4_fundamental_matrix,
)


def test_params_validation_and_flags():
    p = LinearDriftParams(matrix=[[-1.0, 0.5], [0.0, -2.0]], offset=[0.1, 0.2])
    assert p.dim == 2 and p.off_diagonal_nonneg
    q = LinearDriftParams(matrix=[[0.0, -0.2], [0.0, 0.0]], offset=[0.0, 0.0])
    assert not q.off_diagonal_nonneg
    with pytest.raises(ConfigurationError):
        LinearDriftParams(matrix=[[1.0, 0.0]], offset=[1.0])
    with pytest.raises(ConfigurationError):
        LinearDriftParams(matrix=[[np.inf]], offset=[0.0])


def test_params_spec_round_trip():
    spec = DriftSpec.linear([[0.0, 1.0], [0.0, 0.0]], [1.0, -1.0])
    p = LinearDriftParams.from_spec(spec)
    back = p.to_spec()
    assert np.array_equal(back.matrix, spec.matrix)
    assert np.array_equal(back.offset, spec.offset)
    c = LinearDriftParams.from_spec(DriftSpec.constant([2.0]))
    assert np.array_equal(c.matrix, [[0.0]])
    with pytest.raises(ConfigurationError):
        LinearDriftParams.from_spec(DriftSpec.tanh(dim=1))


def test_nilpotent_exponential_closed_form():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    grid = TimeGrid(horizon=1.0, n_steps=64)
    series = fundamental_matrix(A, grid)
    for k, t in enumerate(grid.knots):
        want = np.array([[1.0, t], [0.0, 1.0]])
        assert np.max(np.abs(series.values[k] - want)) <= 1e-12
    assert matrix_ode_check(A, grid) <= 1e-12


def test_diagonal_exponential_closed_form():
    A = np.diag([0.7, -1.3])
    grid = TimeGrid(horizon=2.0, n_steps=32)
    series = fundamental_matrix(A, grid)
    for k, t in enumerate(grid.knots):
        want = np.diag(np.exp(np.array([0.7, -1.3]) * t))
        assert np.max(np.abs(series.values[k] - want)) <= 1e-12
        assert np.max(np.abs(series.inverses[k] - np.diag(1.0 / np.diag(want)))) <= 1e-12


def test_zero_matrix_exact_identity():
    grid = TimeGrid(horizon=1.0, n_steps=16)
    series = fundamental_matrix(np.zeros((3, 3)), grid)
    assert np.array_equal(series.values, np.broadcast_to(np.eye(3), (17, 3, 3)))
    assert matrix_ode_check(np.zeros((3, 3)), grid) == 0.0


def test_rk4_matches_exponential_random_3x3():
    rng = np.random.Generator(np.random.Philox(key=31))
    A = rng.normal(size=(3, 3))
    grid = TimeGrid(horizon=1.0, n_steps=1024)
    assert matrix_ode_check(A, grid) <= 1e-8


def test_rk4_step_error_scales_fourth_order():
    rng = np.random.Generator(np.random.Philox(key=32))
    A = rng.normal(size=(2, 2))
    errs = []
    for m in (16, 32):
        grid = TimeGrid(horizon=1.0, n_steps=m)
        series = fundamental_matrix(A, grid)
        rk = rk4_fundamental_matrix(A, grid)
        errs.append(np.max(np.abs(series.values[-1] - rk[-1])))
    ratio = errs[0] / errs[1]
    assert 10.0 <= ratio <= 26.0  # global order 4: halving h divides error by ~16


def test_semigroup_property():
    rng = np.random.Generator(np.random.Philox(key=33))
    A = rng.normal(size=(2, 2))
    grid = TimeGrid(horizon=1.0, n_steps=64)
    series = fundamental_matrix(A, grid)
    for i, j in ((3, 5), (10, 20), (31, 33), (1, 62)):
        lhs = series.values[i + j]
        rhs = series.values[i] @ series.values[j]
        assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_series_invariants_enforced():
    grid = TimeGrid(horizon=1.0, n_steps=4)
    good = fundamental_matrix(np.array([[0.5]]), grid)
    assert good.dim == 1
    bad_inv = np.array(good.inverses)
    bad_inv[2] *= 1.5
    with pytest.raises(InputError):
        FundamentalMatrixSeries(grid=grid, values=np.array(good.values),
                                inverses=bad_inv)
    shifted = np.array(good.values)
    shifted[0] += 0.1
    with pytest.raises(InputError):
        FundamentalMatrixSeries(grid=grid, values=shifted,
                                inverses=np.array(good.inverses))


def test_solution_path_zero_drift_is_brownian():
    grid = TimeGrid(horizon=1.0, n_steps=32)
    inc = sample_increments(grid, 50, 2, seed=41)
    params = LinearDriftParams(matrix=np.zeros((2, 2)), offset=np.zeros(2))
    path = linear_solution_path(params, [0.5, -0.5], inc)
    want = np.array([0.5, -0.5]) + np.concatenate(
        [np.zeros((50, 1, 2)), np.cumsum(inc.increments, axis=1)], axis=1)
    assert np.max(np.abs(path.values - want)) <= 1e-12


def test_solution_path_pure_offset_ramp():
    grid = TimeGrid(horizon=1.0, n_steps=64)
    inc = sample_increments(grid, 20, 1, seed=42)
    params = LinearDriftParams(matrix=np.zeros((1, 1)), offset=[2.0])
    path = linear_solution_path(params, 1.0, inc)
    brown = np.concatenate([np.zeros((20, 1, 1)),
                            np.cumsum(inc.increments, axis=1)], axis=1)
    want = 1.0 + 2.0 * grid.knots[np.newaxis, :, np.newaxis] + brown
    assert np.max(np.abs(path.values - want)) <= 1e-12


def test_solution_path_scalar_closed_form():
    a, x0 = 0.8, 0.3
    grid = TimeGrid(horizon=1.0, n_steps=128)
    inc = sample_increments(grid, 25, 1, seed=43)
    params = LinearDriftParams(matrix=[[a]], offset=[0.0])
    path = linear_solution_path(params, x0, inc)
    t = grid.knots
    weights = np.exp(-a * t[:-1])
    sums = np.concatenate(
        [np.zeros((25, 1)),
         np.cumsum(weights[np.newaxis, :] * inc.increments[:, :, 0], axis=1)],
        axis=1)
    want = np.exp(a * t)[np.newaxis, :] * (x0 + sums)
    assert np.max(np.abs(path.values[:, :, 0] - want)) <= 1e-10


def test_solution_path_first_order_against_euler():
    # the Euler scheme converges to the closed form at rate dt
    from driftlab import build_drift
    A = np.array([[-0.5, 0.3], [0.2, -1.0]])
    c = np.array([0.4, -0.2])
    params = LinearDriftParams(matrix=A, offset=c)
    drift = build_drift(DriftSpec.linear(A, c))
    x0 = np.array([1.0, -1.0])
    med = []
    for m in (64, 128):
        grid = TimeGrid(horizon=1.0, n_steps=m)
        inc = sample_increments(grid, 400, 2, seed=44)
        exact = linear_solution_path(params, x0, inc)
        euler = euler_maruyama(drift, x0, inc)
        gap = np.max(np.abs(exact.values[:, -1, :]
                            - euler.paths.values[:, -1, :]), axis=1)
        med.append(np.median(gap))
    ratio = med[0] / med[1]
    assert 1.5 <= ratio <= 2.6


def test_solution_path_reuses_series():
    grid = TimeGrid(horizon=1.0, n_steps=16)
    inc = sample_increments(grid, 10, 1, seed=45)
    params = LinearDriftParams(matrix=[[0.5]], offset=[0.1])
    series = fundamental_matrix(params.matrix, grid)
    a = linear_solution_path(params, 0.0, inc)
    b = linear_solution_path(params, 0.0, inc, series=series)
    assert np.array_equal(a.values, b.values)
    other = TimeGrid(horizon=2.0, n_steps=16)
    wrong = fundamental_matrix(params.matrix, other)
    with pytest.raises(InputError):
        linear_solution_path(params, 0.0, inc, series=wrong)


def test_solution_path_dimension_checks():
    grid = TimeGrid(horizon=1.0, n_steps=8)
    inc = sample_increments(grid, 5, 2, seed=46)
    with pytest.raises(InputError):
        linear_solution_path(LinearDriftParams(matrix=[[0.0]], offset=[0.0]),
                             0.0, inc)
    params = LinearDriftParams(matrix=np.zeros((2, 2)), offset=np.zeros(2))
    with pytest.raises(InputError):
        linear_solution_path(params, [0.0, 0.0, 0.0], inc)
