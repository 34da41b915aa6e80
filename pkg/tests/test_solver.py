import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_shard
from edsl.errors import DataError, DimensionError, NumericFailure
from edsl.loss import loss_gradient
from edsl.model import LossSpec, Shard
from edsl.solver import (ShiftedProblem, SolverConfig, kkt_residual, soft_threshold,
                         soft_threshold_vec, solve)

SQ, LG = LossSpec.squared(), LossSpec.logistic()


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(1.0, 1.0) == 0.0
    assert soft_threshold(-1.0, 1.0) == 0.0
    with pytest.raises(DataError):
        soft_threshold(1.0, -0.1)
    assert list(soft_threshold_vec(np.array([3.0, -0.5, -3.0, 1.0]), 1.0)) == [2.0, 0, -2.0, 0]


def scalar_problem(z, lam):
    # 0.5 * (z - beta)^2 from one row x = 1, y = z
    return ShiftedProblem(SQ, Shard(0, np.array([[1.0]]), np.array([z])), None, lam)


def test_closed_form_prox():
    rep = solve(scalar_problem(2.0, 0.5))
    assert rep.beta_hat[0] == pytest.approx(1.5, abs=1e-12)
    assert rep.converged


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 20))
def test_scalar_matches_soft_threshold(z, lam):
    rep = solve(scalar_problem(z, lam))
    assert rep.beta_hat[0] == pytest.approx(soft_threshold(z, lam), abs=1e-8)


def test_kkt_examples():
    prob = scalar_problem(2.0, 0.5)
    assert kkt_residual(prob, [1.5]) <= 1e-12
    shard = Shard(0, np.array([[1.0, 0.0]]), np.array([2.0]))
    assert kkt_residual(ShiftedProblem(SQ, shard, None, 5.0), [0.0, 0.0]) == 0.0
    assert kkt_residual(ShiftedProblem(SQ, shard, None, 0.0), [0.0, 0.0]) == 2.0


def lasso_instance(seed, n=40, p=30):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:4] = rng.standard_normal(4)
    y = X @ beta + 0.3 * rng.standard_normal(n)
    lam = 0.1 * np.max(np.abs(X.T @ y)) / n
    return X, y, lam


@pytest.mark.parametrize("seed", range(5))
def test_matches_coordinate_descent(seed):
    X, y, lam = lasso_instance(seed)
    shift = np.random.default_rng(seed + 100).standard_normal(X.shape[1]) * 0.01
    rep = solve(ShiftedProblem(SQ, Shard(0, X, y), shift, lam))
    ref = oracles.cd_lasso(X, y, lam, shift)
    assert rep.converged and rep.kkt_residual <= 1e-8
    assert oracles.lasso_objective(X, y, shift, lam, rep.beta_hat) <= \
        oracles.lasso_objective(X, y, shift, lam, ref) + 1e-8


def test_newton_identity_at_zero_lambda():
    rng = np.random.default_rng(3)
    shards = [(rng.standard_normal((60, 20)), rng.standard_normal(60)) for _ in range(3)]
    beta_t = rng.standard_normal(20)
    s1 = Shard(0, *shards[0])
    g1 = loss_gradient(SQ, s1, beta_t)
    gbar = np.mean([loss_gradient(SQ, Shard(0, X, y), beta_t) for X, y in shards], axis=0)
    prob = ShiftedProblem.from_gradients(SQ, s1, g1, gbar, 0.0)
    rep = solve(prob, init=beta_t, tol=1e-11)
    ref = oracles.newton_step(shards[0][0], shards[0][1], shards, beta_t)
    assert np.max(np.abs(rep.beta_hat - ref)) <= 1e-8


def test_shift_identity_at_anchor(rng):
    shard = random_shard(rng, 30, 8)
    beta = rng.standard_normal(8)
    g1 = loss_gradient(SQ, shard, beta)
    gbar = rng.standard_normal(8)
    prob = ShiftedProblem.from_gradients(SQ, shard, g1, gbar, 0.1)
    assert np.array_equal(prob.smooth_value_grad(beta)[1], gbar)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["sq", "lg"]))
def test_accepted_iterates_are_monotone(seed, fam):
    rng = np.random.default_rng(seed)
    task, spec = ("regression", SQ) if fam == "sq" else ("classification", LG)
    shard = random_shard(rng, 30, 20, task)
    lam = 0.05
    values = []
    solve(ShiftedProblem(spec, shard, rng.standard_normal(20) * 0.01, lam),
          callback=lambda it, b, F: values.append(F))
    for a, b in zip(values, values[1:]):
        assert b <= a + 1e-12 * max(1.0, abs(a))


def test_row_permutation_invariance(rng):
    X, y, lam = lasso_instance(11)
    perm = rng.permutation(X.shape[0])
    a = solve(ShiftedProblem(SQ, Shard(0, X, y), None, lam)).beta_hat
    b = solve(ShiftedProblem(SQ, Shard(0, X[perm], y[perm]), None, lam)).beta_hat
    assert np.max(np.abs(a - b)) <= 1e-10


def test_repeat_solves_are_bitwise_identical():
    X, y, lam = lasso_instance(12)
    a = solve(ShiftedProblem(SQ, Shard(0, X, y), None, lam)).beta_hat
    b = solve(ShiftedProblem(SQ, Shard(0, X, y), None, lam)).beta_hat
    assert np.array_equal(a, b)


def test_large_lambda_gives_exact_zero(rng):
    shard = random_shard(rng, 30, 10, "classification")
    shift = rng.standard_normal(10) * 0.1
    g0 = loss_gradient(LG, shard, np.zeros(10)) + shift
    rep = solve(ShiftedProblem(LG, shard, shift, float(np.max(np.abs(g0)))))
    assert np.all(rep.beta_hat == 0.0) and rep.iterations == 0


def test_warm_start_from_solution():
    X, y, lam = lasso_instance(4)
    prob = ShiftedProblem(SQ, Shard(0, X, y), None, lam)
    first = solve(prob)
    again = solve(prob, init=first.beta_hat)
    assert again.iterations <= 1
    assert np.max(np.abs(again.beta_hat - first.beta_hat)) <= 1e-8


def test_budget_exhaustion_returns_best_iterate():
    X, y, lam = lasso_instance(5)
    prob = ShiftedProblem(SQ, Shard(0, X, y), None, lam)
    rep = solve(prob, max_iter=3)
    assert not rep.converged and rep.iterations <= 3
    assert rep.kkt_residual == pytest.approx(kkt_residual(prob, rep.beta_hat), rel=1e-12)


def test_multi_shard_problem_equals_pooled(rng):
    a, b = random_shard(rng, 20, 6), random_shard(rng, 20, 6, machine_id=1)
    pooled = Shard(0, np.vstack([a.xs, b.xs]), np.concatenate([a.ys, b.ys]))
    r1 = solve(ShiftedProblem(SQ, [a, b], None, 0.05)).beta_hat
    r2 = solve(ShiftedProblem(SQ, pooled, None, 0.05)).beta_hat
    assert np.array_equal(r1, r2)


def test_non_finite_objective_raises():
    shard = Shard(0, np.array([[1.0]]), np.array([0.0]))
    with pytest.raises(NumericFailure) as info:
        solve(ShiftedProblem(SQ, shard, None, 0.1), init=[1e300])
    assert info.value.last_iterate is not None


def test_invalid_inputs():
    prob = scalar_problem(1.0, 0.1)
    with pytest.raises(DataError):
        solve(prob, tol=0.0)
    with pytest.raises(DataError):
        solve(prob, max_iter=0)
    with pytest.raises(DimensionError):
        solve(prob, init=[0.0, 0.0])
    with pytest.raises(DataError):
        ShiftedProblem(SQ, Shard(0, np.ones((1, 1)), np.ones(1)), None, -1.0)
    with pytest.raises(DataError):
        SolverConfig(shrink=1.5)


def test_report_invariants():
    X, y, lam = lasso_instance(6)
    cfg = SolverConfig(tol=1e-9, max_iter=500)
    rep = solve(ShiftedProblem(SQ, Shard(0, X, y), None, lam), config=cfg)
    assert rep.iterations <= 500
    assert not rep.converged or rep.kkt_residual <= 1e-9
    assert math.isfinite(rep.objective)
