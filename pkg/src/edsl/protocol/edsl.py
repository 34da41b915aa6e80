"""The EDSL round protocol, master side.

Round 0: the master solves its local l1 problem at lambda_0.
Round t+1: broadcast beta_t, gather every worker's gradient, and solve

    min  L_1(beta) + <gbar(beta_t) - grad L_1(beta_t), beta> + lambda_{t+1} ||beta||_1

on the master shard, warm-started at beta_t.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..loss import loss_gradient, mean_of
from ..model import l1_norm, l2_norm
from ..solver import ShiftedProblem, SolverConfig, SolverReport, solve
from .schedule import (PRACTICAL, THEORETICAL, LambdaContext,
                       accuracy_condition_holds, default_constant, lambda_at)
from .transport import InProcessTransport

log = logging.getLogger(__name__)

__all__ = ["RoundRecord", "RunTrace", "EdslMaster", "edsl_init", "edsl_round",
           "run_edsl", "payload_bytes_per_round"]


def payload_bytes_per_round(m, p):
    """One p-vector down and one up per non-master machine, 8 bytes a value."""
    return 2 * (m - 1) * p * 8


@dataclass
class RoundRecord:
    round: int
    lam: float
    beta: np.ndarray
    solver: SolverReport | None
    payload_bytes: int
    header_bytes: int
    wall_time: float
    l1_error: float | None = None
    l2_error: float | None = None
    objective: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return 0 if self.solver is None else self.solver.iterations


@dataclass
class RunTrace:
    method: str
    records: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def betas(self):
        return [r.beta for r in self.records]

    @property
    def final(self):
        return self.records[-1].beta

    def cumulative_bytes(self):
        return np.cumsum([r.payload_bytes for r in self.records]).tolist()

    def l2_errors(self):
        return [r.l2_error for r in self.records]


def _errors(beta, truth):
    if truth is None:
        return None, None
    diff = beta - truth.beta_star
    return l1_norm(diff), l2_norm(diff)


class EdslMaster:
    """State held by machine 0: its shard, the schedule, and a transport."""

    def __init__(self, shard, spec, schedule, transport, m, solver_config=SolverConfig(),
                 truth=None, context=None):
        if shard.machine_id != 0:
            raise ConfigError("the master owns shard 0")
        self.shard = shard
        self.spec = spec
        self.schedule = schedule
        self.transport = transport
        self.m = m
        self.solver_config = solver_config
        self.truth = truth
        if context is None:
            context = LambdaContext(shard.n, shard.p, m, spec)
        if schedule.mode == PRACTICAL and schedule.c is None and context.c is None:
            c = default_constant(shard, spec, solver_config)
            context = LambdaContext(context.n, context.p, context.m, spec, c,
                                    context.beta_prev, context.beta_star,
                                    context.grad_star_inf, context.x_max_inf)
        if schedule.mode == THEORETICAL and context.beta_star is None:
            raise ConfigError("theoretical schedule needs a context built with_truth")
        self.context = context

    def _record(self, t, lam, report, started, payload=0, header=0):
        l1, l2 = _errors(report.beta_hat, self.truth)
        rec = RoundRecord(t, lam, report.beta_hat, report, payload, header,
                          time.perf_counter() - started, l1, l2, report.objective)
        if self.schedule.mode == THEORETICAL:
            rec.diagnostics["accuracy_condition"] = accuracy_condition_holds(
                self.context, report.beta_hat, self.schedule.delta)
        return rec

    def init(self):
        """Round 0: local l1-regularized fit; no communication."""
        started = time.perf_counter()
        lam = lambda_at(self.schedule, 0, self.context.at(None))
        report = solve(ShiftedProblem(self.spec, self.shard, None, lam),
                       config=self.solver_config)
        return self._record(0, lam, report, started)

    def gather(self, beta_t, t):
        """Broadcast beta_t; return (local gradient, global mean, exchange)."""
        exchange = self.transport.exchange(t, beta_t)
        expected = list(range(1, self.m))
        if sorted(exchange.gradients) != expected:
            raise ConfigError(f"transport returned machines {sorted(exchange.gradients)}, "
                              f"expected {expected}")
        local = loss_gradient(self.spec, self.shard, beta_t)
        ordered = [local] + [exchange.gradients[j] for j in expected]
        return local, mean_of(ordered), exchange

    def step(self, beta_t, t):
        """Produce beta_{t+1} from beta_t (the record is labelled round t+1)."""
        started = time.perf_counter()
        local, gbar, exchange = self.gather(beta_t, t)
        lam = lambda_at(self.schedule, t + 1, self.context.at(beta_t))
        problem = ShiftedProblem.from_gradients(self.spec, self.shard, local, gbar, lam)
        report = solve(problem, init=beta_t, config=self.solver_config)
        if not report.converged:
            log.warning("round %d: subproblem stopped at KKT %.3g after %d iterations",
                        t + 1, report.kkt_residual, report.iterations)
        return self._record(t + 1, lam, report, started,
                            exchange.payload_bytes, exchange.header_bytes)

    def run(self, rounds):
        if rounds < 0:
            raise ConfigError("rounds must be nonnegative")
        trace = RunTrace("edsl")
        rec = self.init()
        trace.append(rec)
        for t in range(rounds):
            rec = self.step(rec.beta, t)
            trace.append(rec)
        return trace


def edsl_init(dataset, spec, schedule, solver_config=SolverConfig(), truth=None):
    """Return (beta_0, round-0 record) for a dataset held in memory."""
    master = EdslMaster(dataset.master, spec, schedule,
                        InProcessTransport.from_dataset(dataset, spec), dataset.m,
                        solver_config, truth, _context(dataset, spec, schedule, truth))
    rec = master.init()
    return rec.beta, rec


def edsl_round(master, beta_t, t):
    """Return (beta_{t+1}, record)."""
    rec = master.step(beta_t, t)
    return rec.beta, rec


def _context(dataset, spec, schedule, truth):
    ctx = LambdaContext(dataset.n, dataset.p, dataset.m, spec)
    if schedule.mode == THEORETICAL:
        if truth is None:
            raise ConfigError("theoretical schedule needs ground truth")
        ctx = ctx.with_truth(dataset, truth)
    return ctx


def make_master(dataset, spec, schedule, solver_config=SolverConfig(), truth=None,
                transport=None):
    transport = transport or InProcessTransport.from_dataset(dataset, spec)
    return EdslMaster(dataset.master, spec, schedule, transport, dataset.m,
                      solver_config, truth, _context(dataset, spec, schedule, truth))


def run_edsl(dataset, spec, schedule, rounds, solver_config=SolverConfig(), truth=None,
             transport=None):
    """Run rounds 0..T in memory (or over ``transport``) and return the trace."""
    return make_master(dataset, spec, schedule, solver_config, truth, transport).run(rounds)
