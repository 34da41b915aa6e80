"""Solver for the shifted l1-regularized problem

    minimize  L(beta) + <shift, beta> + lam * ||beta||_1

where L is the empirical loss over one or more shards pooled together. A
zero shift gives the plain local or centralized l1 problem.

The method is accelerated proximal gradient with backtracking. Momentum is
restarted whenever a step would raise the composite objective or point
against the last move, so accepted iterates are monotone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, DimensionError, NumericFailure
from .loss import curvature_weights, hessian_vector, raw_value_grad
from .model import as_vector, l1_norm

__all__ = [
    "SolverConfig", "SolverReport", "ShiftedProblem",
    "soft_threshold", "soft_threshold_vec", "kkt_residual", "solve",
    "spectral_norm_estimate",
]


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 10_000
    shrink: float = 0.5
    power_iters: int = 5

    def __post_init__(self):
        if not self.tol > 0:
            raise DataError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise DataError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0 < self.shrink < 1:
            raise DataError(f"shrink must lie in (0, 1), got {self.shrink}")


@dataclass(frozen=True)
class SolverReport:
    beta_hat: np.ndarray
    iterations: int
    kkt_residual: float
    objective: float
    converged: bool


class ShiftedProblem:
    """Loss over ``shards`` plus a linear shift plus ``lam * ||beta||_1``."""

    def __init__(self, spec, shards, shift=None, lam=0.0):
        shards = [shards] if not isinstance(shards, (list, tuple)) else list(shards)
        if not shards:
            raise DimensionError("a problem needs at least one shard")
        p = shards[0].p
        if any(s.p != p for s in shards):
            raise DimensionError("shards disagree on dimension")
        if len(shards) == 1:
            self.xs, self.ys = shards[0].xs, shards[0].ys
        else:
            self.xs = np.ascontiguousarray(np.vstack([s.xs for s in shards]))
            self.ys = np.ascontiguousarray(np.concatenate([s.ys for s in shards]))
        self.spec = spec
        self.p = p
        self.shift = np.zeros(p) if shift is None else as_vector(shift, p, "shift")
        self.has_shift = bool(np.any(self.shift))
        lam = float(lam)
        if not lam >= 0 or not math.isfinite(lam):
            raise DataError(f"lambda must be finite and nonnegative, got {lam}")
        self.lam = lam
        self._anchor = None

    @classmethod
    def from_gradients(cls, spec, shard, local_grad, global_grad, lam):
        """Shift = global_grad - local_grad, both taken at the same anchor.

        The smooth gradient is evaluated as (grad L(beta) - local_grad) +
        global_grad, so at the anchor it equals ``global_grad`` bit for bit.
        """
        local_grad = as_vector(local_grad, shard.p, "local_grad")
        global_grad = as_vector(global_grad, shard.p, "global_grad")
        problem = cls(spec, shard, global_grad - local_grad, lam)
        if problem.has_shift:
            problem._anchor = (local_grad, global_grad)
        return problem

    @property
    def n(self):
        return self.xs.shape[0]

    def smooth_value_grad(self, beta):
        value, grad = raw_value_grad(self.spec.family, self.xs, self.ys, beta)
        if self.has_shift:
            value += kernels.dot(self.shift, beta)
            if self._anchor is None:
                grad = grad + self.shift
            else:
                grad = (grad - self._anchor[0]) + self._anchor[1]
        return value, grad

    def objective(self, beta):
        return self.smooth_value_grad(beta)[0] + self.lam * l1_norm(beta)


def soft_threshold(z, t):
    """sign(z) * max(|z| - t, 0); exact ties go to zero."""
    if t < 0:
        raise DataError(f"threshold must be nonnegative, got {t}")
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def soft_threshold_vec(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _kkt_from_grad(beta, grad, lam):
    nz = beta != 0
    viol = np.maximum(np.abs(grad) - lam, 0.0)
    viol[nz] = np.abs(grad[nz] + lam * np.sign(beta[nz]))
    return float(np.max(viol)) if viol.size else 0.0


def kkt_residual(problem, beta):
    """l-infinity violation of the first-order optimality conditions."""
    beta = as_vector(beta, problem.p, "beta")
    return _kkt_from_grad(beta, problem.smooth_value_grad(beta)[1], problem.lam)


def spectral_norm_estimate(xs, weights, iters=5):
    """Power-iteration estimate of ||(1/n) X^T diag(w) X||_2 (a lower bound)."""
    p = xs.shape[1]
    v = np.full(p, 1.0 / math.sqrt(p)) if p else np.zeros(0)
    est = 0.0
    for _ in range(iters):
        hv = hessian_vector(xs, weights, v)
        norm = float(np.sqrt(hv @ hv))
        if norm == 0.0:
            return est
        est = norm
        v = hv / norm
    return est


def solve(problem, init=None, tol=None, max_iter=None, config=SolverConfig(),
          callback=None):
    """Minimize the shifted problem starting from ``init``.

    Stops once the KKT residual drops to ``tol`` or the iteration budget is
    spent; in the latter case the iterate with the smallest residual seen is
    returned with ``converged=False``. ``callback(iteration, beta, objective)``
    is called on every accepted iterate.
    """
    tol = config.tol if tol is None else float(tol)
    max_iter = config.max_iter if max_iter is None else int(max_iter)
    if not tol > 0:
        raise DataError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise DataError(f"max_iter must be >= 1, got {max_iter}")
    p, lam = problem.p, problem.lam
    x = np.zeros(p) if init is None else as_vector(init, p, "init").copy()

    fx, gx = problem.smooth_value_grad(x)
    Fx = fx + lam * l1_norm(x)
    if not math.isfinite(Fx):
        raise NumericFailure("objective is not finite at the initial point", x)
    kkt = _kkt_from_grad(x, gx, lam)
    best_x, best_kkt, best_F = x, kkt, Fx
    if kkt <= tol:
        return SolverReport(x, 0, kkt, Fx, True)

    weights = curvature_weights(problem.spec, problem.xs, problem.ys, x)
    L_est = spectral_norm_estimate(problem.xs, weights, config.power_iters)
    step = 1.0 / L_est if L_est > 0 else 1.0

    y, fy, gy = x, fx, gx
    t = 1.0
    momentum = False
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        # backtracking from the extrapolated point y
        for _ in range(200):
            z = soft_threshold_vec(y - step * gy, step * lam)
            fz, gz = problem.smooth_value_grad(z)
            if not math.isfinite(fz):
                step *= config.shrink
                continue
            d = z - y
            dd = float(d @ d)
            bound = dd / (2.0 * step)
            # second test is the convexity form of the same bound; it is
            # immune to cancellation in fz - fy near convergence
            if fz - fy - float(gy @ d) <= bound or float((gz - gy) @ d) <= bound:
                break
            step *= config.shrink
        else:
            raise NumericFailure("backtracking failed to find a finite step", best_x)

        Fz = fz + lam * l1_norm(z)
        if Fz > Fx and momentum:
            # redo the step from the last accepted point without momentum
            y, fy, gy, t, momentum = x, fx, gx, 1.0, False
            continue
        # A plain proximal step that passed the backtracking test descends in
        # exact arithmetic; any apparent increase is rounding in F itself.
        if momentum and float((y - z) @ (z - x)) > 0.0:
            t = 1.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta_coef = (t - 1.0) / t_next
        x_prev = x
        x, fx, gx, Fx = z, fz, gz, Fz
        if callback is not None:
            callback(it, x, Fx)
        kkt = _kkt_from_grad(x, gx, lam)
        if kkt < best_kkt:
            best_x, best_kkt, best_F = x, kkt, Fx
        if kkt <= tol:
            converged = True
            break
        if beta_coef > 0.0:
            y = x + beta_coef * (x - x_prev)
            fy, gy = problem.smooth_value_grad(y)
            momentum = True
            if not math.isfinite(fy):
                y, fy, gy, t_next, momentum = x, fx, gx, 1.0, False
        else:
            y, fy, gy = x, fx, gx
            momentum = False
        t = t_next

    if converged:
        return SolverReport(x, it, kkt, Fx, True)
    return SolverReport(best_x, it, best_kkt, best_F, best_kkt <= tol)
