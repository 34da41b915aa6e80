"""Regularization schedules and the recursive error bounds they come from."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..loss import average_gradient
from ..model import REGRESSION, l1_norm, linf_norm
from ..solver import ShiftedProblem, SolverConfig, solve

THEORETICAL = "theoretical"
PRACTICAL = "practical"
FIXED = "fixed"


@dataclass(frozen=True)
class LambdaSchedule:
    """How lambda_t is chosen for round t.

    ``fixed`` uses ``value`` every round. ``practical`` decays geometrically,
    ``max(c sqrt(log p / (m n)), c sqrt(log p / n) * gamma**t)``. With
    ``c=None`` the constant is estimated from the master shard.
    ``theoretical`` needs the true coefficients and is for validation only.
    """

    mode: str
    value: float | None = None
    c: float | None = None
    gamma: float = 0.5
    delta: float = 0.05

    def __post_init__(self):
        if self.mode not in (THEORETICAL, PRACTICAL, FIXED):
            raise ConfigError(f"unknown lambda schedule {self.mode!r}")
        if self.mode == FIXED and (self.value is None or not self.value >= 0):
            raise ConfigError("fixed schedule needs a nonnegative value")
        if self.mode == PRACTICAL:
            if self.c is not None and not self.c > 0:
                raise ConfigError("practical schedule needs c > 0")
            if not 0 < self.gamma <= 1:
                raise ConfigError("practical schedule needs 0 < gamma <= 1")
        if self.mode == THEORETICAL and not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")

    @classmethod
    def fixed(cls, value):
        return cls(FIXED, value=float(value))

    @classmethod
    def practical(cls, c=None, gamma=0.5):
        return cls(PRACTICAL, c=c, gamma=gamma)

    @classmethod
    def theoretical(cls, delta=0.05):
        return cls(THEORETICAL, delta=delta)


@dataclass(frozen=True)
class LambdaContext:
    """Everything a schedule may look at when producing lambda_t.

    ``beta_prev`` is the iterate of round t-1 (None for t = 0, read as the
    zero vector). The truth-dependent fields are only needed in theoretical
    mode; build them with :meth:`with_truth`.
    """

    n: int
    p: int
    m: int
    spec: object
    c: float | None = None
    beta_prev: np.ndarray | None = None
    beta_star: np.ndarray | None = None
    grad_star_inf: float | None = None
    x_max_inf: float | None = None

    def at(self, beta_prev):
        return LambdaContext(self.n, self.p, self.m, self.spec, self.c, beta_prev,
                             self.beta_star, self.grad_star_inf, self.x_max_inf)

    def with_truth(self, dataset, truth):
        gbar = average_gradient(self.spec, dataset.shards, truth.beta_star)
        return LambdaContext(self.n, self.p, self.m, self.spec, self.c,
                             self.beta_prev, truth.beta_star, linf_norm(gbar),
                             dataset.max_abs_feature())


def theoretical_lambda(grad_star_inf, L, M, x_max_inf, err_l1, n, p, delta=0.05):
    """2||gbar(beta*)||_inf + 2 L x^2 err sqrt(log(2p/delta)/n) + 2 M x^3 err^2."""
    return (2.0 * grad_star_inf
            + 2.0 * L * x_max_inf ** 2 * err_l1 * math.sqrt(math.log(2.0 * p / delta) / n)
            + 2.0 * M * x_max_inf ** 3 * err_l1 ** 2)


def practical_lambda(c, gamma, t, n, p, m):
    floor = c * math.sqrt(math.log(p) / (m * n))
    start = c * math.sqrt(math.log(p) / n)
    return max(floor, start * gamma ** t)


def lambda_at(schedule, t, context):
    if t < 0:
        raise ConfigError("round index must be nonnegative")
    if schedule.mode == FIXED:
        return schedule.value
    if schedule.mode == PRACTICAL:
        c = schedule.c if schedule.c is not None else context.c
        if c is None:
            raise ConfigError("practical schedule has no constant; estimate one first")
        return practical_lambda(c, schedule.gamma, t, context.n, max(context.p, 2), context.m)
    if context.beta_star is None or context.grad_star_inf is None:
        raise ConfigError("theoretical schedule needs the true coefficients")
    prev = np.zeros(context.p) if context.beta_prev is None else context.beta_prev
    err = l1_norm(prev - context.beta_star)
    lam = theoretical_lambda(context.grad_star_inf, context.spec.smoothness_L,
                             context.spec.third_deriv_M, context.x_max_inf, err,
                             context.n, context.p, schedule.delta)
    if not lam > 0:
        raise ConfigError("theoretical lambda is zero (noiseless data at the truth)")
    return lam


def accuracy_condition_holds(context, beta_t, delta=0.05):
    """M ||x||_inf ||beta_t - beta*||_1 <= L sqrt(log(2p/delta)/n)."""
    err = l1_norm(beta_t - context.beta_star)
    lhs = context.spec.third_deriv_M * context.x_max_inf * err
    return lhs <= context.spec.smoothness_L * math.sqrt(math.log(2.0 * context.p / delta) / context.n)


def estimate_noise_scale(shard, spec, config=SolverConfig()):
    """Residual standard deviation after a pilot local lasso (0.5 for logistic)."""
    if spec.family != "squared" or shard.task != REGRESSION:
        return 0.5
    n, p = shard.n, max(shard.p, 2)
    pilot_lam = float(np.std(shard.ys)) * math.sqrt(2.0 * math.log(p) / n)
    if pilot_lam <= 0:
        return 1.0
    beta = solve(ShiftedProblem(spec, shard, None, pilot_lam), config=config).beta_hat
    resid = shard.ys - shard.xs @ beta
    sigma = float(np.std(resid))
    return sigma if sigma > 0 else 1.0


def default_constant(shard, spec, config=SolverConfig()):
    """c = 2 * sigma_hat."""
    return 2.0 * estimate_noise_scale(shard, spec, config)


@dataclass(frozen=True)
class BoundEval:
    l1_bound: float
    l2_bound: float
    vacuous: bool


def bound_rhs(t, a_n, b_n, s, kappa, grad_inf, err0_l1):
    """Right-hand sides of the unrolled l1 and l2 error recursions after t+1 rounds.

    A contraction factor ``a_n >= 1`` makes the bound meaningless; it is still
    evaluated (the series sum is taken literally) but flagged as vacuous.
    """
    if t < 0:
        raise ConfigError("t must be nonnegative")
    vacuous = a_n >= 1.0
    if a_n == 1.0:
        series = float(t + 1)
    else:
        series = (1.0 - a_n ** (t + 1)) / (1.0 - a_n)
    l1 = series * (48.0 * s / kappa) * grad_inf + a_n ** (t + 1) * err0_l1
    l2 = series * (12.0 * math.sqrt(s) / kappa) * grad_inf + a_n ** t * b_n * err0_l1
    return BoundEval(l1, l2, vacuous)
