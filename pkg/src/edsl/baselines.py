"""Comparison methods: Local, Centralize, distributed proximal gradient, and
Avg-Debias (one-shot average of debiased local estimates, hard-thresholded).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericFailure
from .loss import curvature_weights, loss_gradient, loss_value, mean_of
from .model import LossSpec, Shard, l1_norm, l2_norm
from .protocol.edsl import RoundRecord, RunTrace
from .protocol.transport import InProcessTransport
from .solver import (ShiftedProblem, SolverConfig, solve, soft_threshold_vec,
                     spectral_norm_estimate)

log = logging.getLogger(__name__)

__all__ = [
    "local", "centralize", "centralize_bytes", "avg_debias_bytes", "global_objective",
    "prox_gd_distributed", "DebiasModel", "nodewise_theta", "coherence", "debias",
    "avg_debias", "avg_debias_detail", "hard_threshold",
    "lambda_grid", "validation_loss", "tune_lambda", "MAX_DEBIAS_P",
]

MAX_DEBIAS_P = 2000
DIVERGENCE_RUN = 10


def local(dataset, spec, lam, solver_config=SolverConfig(), full_output=False):
    """l1-regularized fit on the master shard alone.

    With ``full_output`` the whole :class:`SolverReport` is returned.
    """
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    report = solve(ShiftedProblem(spec, dataset.master, None, lam), config=solver_config)
    return report if full_output else report.beta_hat


def centralize(dataset, spec, lam, solver_config=SolverConfig(), full_output=False):
    """l1-regularized fit on every shard pooled into one loss."""
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    report = solve(ShiftedProblem(spec, list(dataset.shards), None, lam),
                   config=solver_config)
    return report if full_output else report.beta_hat


def centralize_bytes(m, n, p):
    """Every worker ships its n rows of p features plus responses once."""
    return (m - 1) * n * (p + 1) * 8


def avg_debias_bytes(m, p):
    """Every worker ships one debiased p-vector once."""
    return (m - 1) * p * 8


def global_objective(dataset, spec, lam, beta):
    """(1/m) sum_j L_j(beta) + lam ||beta||_1."""
    values = [loss_value(spec, s, beta) for s in dataset.shards]
    return sum(values) / len(values) + lam * l1_norm(beta)


def _errors(beta, truth):
    if truth is None:
        return None, None
    d = beta - truth.beta_star
    return l1_norm(d), l2_norm(d)


def prox_gd_distributed(dataset, spec, lam, step=None, rounds=10, init=None, truth=None,
                        transport=None, power_iters=50, solver_config=SolverConfig()):
    """Proximal gradient on the global objective, one exchange per step.

    ``init`` defaults to the local solution at ``lam``. ``step`` defaults to
    the inverse of a power-iteration estimate of the averaged Hessian norm at
    ``init``. A run whose objective rises for ten straight rounds is flagged
    as diverged in ``trace.flags``; it is not stopped.
    """
    if step is not None and not step > 0:
        raise ConfigError("step must be positive")
    if rounds < 0:
        raise ConfigError("rounds must be nonnegative")
    started = time.perf_counter()
    beta = (local(dataset, spec, lam, solver_config) if init is None
            else np.array(init, dtype=np.float64))
    if step is None:
        pooled = dataset.pooled()
        weights = curvature_weights(spec, pooled.xs, pooled.ys, beta)
        L_est = spectral_norm_estimate(pooled.xs, weights, power_iters)
        step = 1.0 / L_est if L_est > 0 else 1.0
    transport = transport or InProcessTransport.from_dataset(dataset, spec)
    trace = RunTrace("prox_gd", flags={"diverged": False, "step": step})
    obj = global_objective(dataset, spec, lam, beta)
    l1, l2 = _errors(beta, truth)
    trace.append(RoundRecord(0, lam, beta, None, 0, 0, time.perf_counter() - started,
                             l1, l2, obj))
    rising = 0
    for t in range(rounds):
        started = time.perf_counter()
        exchange = transport.exchange(t, beta)
        grads = [loss_gradient(spec, dataset.master, beta)]
        grads += [exchange.gradients[j] for j in range(1, dataset.m)]
        gbar = mean_of(grads)
        beta = soft_threshold_vec(beta - step * gbar, step * lam)
        new_obj = global_objective(dataset, spec, lam, beta)
        rising = rising + 1 if new_obj > obj else 0
        if rising >= DIVERGENCE_RUN and not trace.flags["diverged"]:
            log.warning("prox_gd: objective rose for %d consecutive rounds", rising)
            trace.flags["diverged"] = True
        obj = new_obj
        l1, l2 = _errors(beta, truth)
        trace.append(RoundRecord(t + 1, lam, beta, None, exchange.payload_bytes,
                                 exchange.header_bytes, time.perf_counter() - started,
                                 l1, l2, obj))
    return trace


def hard_threshold(v, tau):
    """Keep entries with |v_i| > tau, zero the rest."""
    if not tau >= 0:
        raise ConfigError("tau must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    return np.where(np.abs(v) > tau, v, 0.0)


@dataclass
class DebiasModel:
    """Approximate inverse of the (weighted) sample covariance, row by row."""

    theta: np.ndarray
    gamma: float
    degenerate_rows: list = field(default_factory=list)

    @property
    def theta_rows(self):
        return list(self.theta)


def nodewise_theta(shard, gamma, weights=None, solver_config=SolverConfig()):
    """Nodewise-lasso estimate of the inverse covariance of ``shard.xs``.

    Row k regresses column k on the others with penalty ``gamma``; with
    coefficients g_k and tau_k^2 = ||x_k - X_{-k} g_k||^2 / n + gamma ||g_k||_1
    the row is (1 at k, -g_k elsewhere) / tau_k^2. ``weights`` rescale the
    rows of the design first (sqrt(w_i) x_i).
    """
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    X = shard.xs
    if weights is not None:
        X = np.ascontiguousarray(X * np.sqrt(np.asarray(weights))[:, None])
    n, p = X.shape
    theta = np.zeros((p, p))
    degenerate = []
    for k in range(p):
        xk = np.ascontiguousarray(X[:, k])
        if float(xk @ xk) / n == 0.0:
            theta[k, k] = 1.0
            degenerate.append(k)
            continue
        others = np.ascontiguousarray(np.delete(X, k, axis=1))
        if p == 1:
            coef = np.zeros(0)
            resid = xk
        else:
            problem = ShiftedProblem(LossSpec.squared(), Shard(0, others, xk), None, gamma)
            coef = solve(problem, config=solver_config).beta_hat
            resid = xk - others @ coef
        tau2 = float(resid @ resid) / n + gamma * l1_norm(coef)
        if not tau2 > 0 or not math.isfinite(tau2):
            theta[k, k] = 1.0
            degenerate.append(k)
            continue
        row = np.insert(-coef, k, 1.0)
        theta[k] = row / tau2
    if degenerate:
        log.warning("nodewise: %d degenerate columns fell back to unit rows", len(degenerate))
    return DebiasModel(theta, gamma, degenerate)


def coherence(shard, model, weights=None):
    """||Sigma_hat Theta - I||_inf for the (weighted) design of ``shard``."""
    X = shard.xs
    if weights is not None:
        X = X * np.sqrt(np.asarray(weights))[:, None]
    sigma = X.T @ X / X.shape[0]
    return float(np.max(np.abs(sigma @ model.theta.T - np.eye(X.shape[1]))))


def debias(spec, shard, beta_hat, theta):
    """One-step correction beta_hat - Theta grad L(beta_hat)."""
    return beta_hat - theta @ loss_gradient(spec, shard, beta_hat)


@dataclass
class DebiasResult:
    beta: np.ndarray
    averaged: np.ndarray
    failed_machines: list
    coherence: dict


def _machine_debiased(spec, shard, lam, gamma, solver_config, nodewise_config):
    beta_hat = solve(ShiftedProblem(spec, shard, None, lam), config=solver_config).beta_hat
    weights = None
    if spec.family == "logistic":
        weights = curvature_weights(spec, shard.xs, shard.ys, beta_hat)
    model = nodewise_theta(shard, gamma, weights, nodewise_config)
    coh = coherence(shard, model, weights)
    return debias(spec, shard, beta_hat, model.theta), coh


def debiased_estimates(dataset, spec, lam, gamma, solver_config=SolverConfig(),
                       nodewise_config=SolverConfig(tol=1e-6), force=False):
    """Per-machine debiased estimates. Failed machines map to None."""
    if not lam > 0 or not gamma > 0:
        raise ConfigError("lambda and gamma must be positive")
    if dataset.p > MAX_DEBIAS_P and not force:
        raise ConfigError(f"Avg-Debias solves p nodewise problems per machine; "
                          f"p={dataset.p} exceeds {MAX_DEBIAS_P} (pass force=True)")
    out, coh = {}, {}
    for shard in dataset.shards:
        try:
            est, c = _machine_debiased(spec, shard, lam, gamma, solver_config,
                                       nodewise_config)
        except NumericFailure as exc:
            log.warning("avg_debias: machine %d failed: %s", shard.machine_id, exc)
            out[shard.machine_id], coh[shard.machine_id] = None, math.inf
            continue
        coh[shard.machine_id] = c
        if not np.all(np.isfinite(est)) or c > 1.0:
            log.warning("avg_debias: machine %d debiasing failed (coherence %.3g)",
                        shard.machine_id, c)
            est = None
        out[shard.machine_id] = est
    return out, coh


def average_debiased(estimates, tau, coherence_by_machine=None):
    ok = [estimates[j] for j in sorted(estimates) if estimates[j] is not None]
    failed = [j for j in sorted(estimates) if estimates[j] is None]
    if not ok:
        raise NumericFailure("debiasing failed on every machine")
    averaged = mean_of(ok)
    return DebiasResult(hard_threshold(averaged, tau), averaged, failed,
                        coherence_by_machine or {})


def avg_debias_detail(dataset, spec, lam, gamma, tau, solver_config=SolverConfig(),
                      nodewise_config=SolverConfig(tol=1e-6), force=False):
    if not tau >= 0:
        raise ConfigError("tau must be nonnegative")
    est, coh = debiased_estimates(dataset, spec, lam, gamma, solver_config,
                                  nodewise_config, force)
    return average_debiased(est, tau, coh)


def avg_debias(dataset, spec, lam, gamma, tau, solver_config=SolverConfig(),
               nodewise_config=SolverConfig(tol=1e-6), force=False):
    return avg_debias_detail(dataset, spec, lam, gamma, tau, solver_config,
                             nodewise_config, force).beta


# -- tuning -----------------------------------------------------------------

def lambda_grid(upper, count=10, ratio=1e-2):
    """``count`` values log-spaced from ``upper`` down to ``upper * ratio``."""
    if not upper > 0 or count < 1:
        raise ConfigError("grid needs a positive upper end and at least one point")
    return list(np.geomspace(upper, upper * ratio, count))


def validation_loss(spec, shard, beta):
    if shard.n == 0:
        raise DataError("empty validation set")
    return loss_value(spec, shard, beta)


def tune_lambda(fit, grid, spec, validation):
    """Return (best value, its validation loss) for ``fit(value) -> beta``.

    Ties go to the larger value (grids run from large to small).
    """
    best, best_loss = None, math.inf
    for value in grid:
        score = validation_loss(spec, validation, fit(value))
        if score < best_loss:
            best, best_loss = value, score
    return best, best_loss
