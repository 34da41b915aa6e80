"""Run every configured method over R independent trials and write CSVs.

The main CSV holds one row per (method, trial, round). One-shot methods
(local, centralize, avg_debias) get a single row per trial at round -1.
A trial-averaged summary is written next to it, plus a failures file when
some method raised instead of producing an estimate.
"""
from __future__ import annotations

import csv
import functools
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import baselines
from ..datagen import (generate, generate_heldout, generate_shard, load_text,
                       partition, sample_beta_star, split_train_val_test)
from ..errors import ConfigError, EdslError, TransportError, UndefinedMetricError
from ..model import Dataset, LossSpec, Shard
from ..protocol.edsl import run_edsl
from ..protocol.schedule import FIXED, PRACTICAL, THEORETICAL, LambdaSchedule, default_constant
from .config import ExperimentConfig, FileData
from .metrics import estimation_errors, test_metric

log = logging.getLogger(__name__)

HEADER = ("method", "trial", "round", "l1_error", "l2_error", "objective", "metric",
          "payload_bytes", "cumulative_bytes", "solver_iterations", "wall_ms")
SUMMARY_HEADER = ("method", "round", "trials") + HEADER[3:]
FAILURE_HEADER = ("method", "trial", "error", "message")
BASELINE_ROUND = -1
NAN = float("nan")


@dataclass
class MetricRow:
    method: str
    trial: int
    round: int
    l1_error: float
    l2_error: float
    objective: float
    metric: float
    payload_bytes: float
    cumulative_bytes: float
    solver_iterations: float
    wall_ms: float

    def cells(self):
        return [self.method, str(self.trial), str(self.round)] + [
            _fmt(getattr(self, name)) for name in HEADER[3:]]


@dataclass
class Failure:
    method: str
    trial: int
    error: str
    message: str


def _fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    # repr is the shortest string that round-trips, so output is reproducible
    return repr(value)


@dataclass
class TrialData:
    """Everything one trial needs: data, truth, splits and default penalties."""

    trial: int
    dataset: Dataset
    spec: LossSpec
    truth: object = None
    test: Shard | None = None
    val_master: Shard | None = None
    val_pooled: Shard | None = None
    fit_master: Dataset | None = None   # training part left after the holdout carve
    fit_pooled: Dataset | None = None
    c: float = 1.0

    def __post_init__(self):
        self.tuned = {}   # penalties picked by validation, filled lazily

    @property
    def n(self):
        return self.dataset.n

    @property
    def p(self):
        return self.dataset.p

    @property
    def m(self):
        return self.dataset.m

    def lam_local(self, c=None):
        """c sqrt(log p / n): the single-machine rate."""
        return (self.c if c is None else c) * math.sqrt(math.log(max(self.p, 2)) / self.n)

    def lam_central(self, c=None):
        """c sqrt(log p / (m n)): the pooled rate."""
        return self.lam_local(c) / math.sqrt(self.m)


@functools.lru_cache(maxsize=4)
def _load_rows(path, format, task, p):
    return load_text(path, format, task, p)


def _carve(dataset, fraction=0.2):
    """Split every shard into (fit rows, holdout rows)."""
    k = int(dataset.n * fraction)
    if k < 1 or dataset.n - k < 1:
        raise ConfigError(f"n={dataset.n} is too small for a validation holdout")
    fit, held = [], []
    for s in dataset.shards:
        fit.append(Shard(s.machine_id, s.xs[:-k], s.ys[:-k], s.task))
        held.append(Shard(s.machine_id, s.xs[-k:], s.ys[-k:], s.task))
    return Dataset(tuple(fit), dataset.task), held


def _pool(shards):
    xs = np.vstack([s.xs for s in shards])
    ys = np.concatenate([s.ys for s in shards])
    return Shard(0, xs, ys, shards[0].task)


def prepare_trial(config: ExperimentConfig, trial: int) -> TrialData:
    """Build (or load and split) the data of trial ``trial``."""
    spec = LossSpec.for_task(config.task)
    if isinstance(config.data, FileData):
        d = config.data
        rows = _load_rows(d.path, d.format, d.task, d.p)
        train, val, test = split_train_val_test(rows, config.seed + trial)
        dataset = partition(train, d.m, d.partition, config.seed + trial)
        td = TrialData(trial, dataset, spec, None, test if test.n else None)
        if config.tuned:
            if val.n == 0:
                raise ConfigError("tuned mode needs a nonempty validation split")
            td.val_master = td.val_pooled = val
            td.fit_master = td.fit_pooled = dataset
    else:
        synth = config.synth_for_trial(trial)
        dataset, truth = generate(synth)
        test = generate_heldout(synth, config.test_rows, truth) if config.test_rows else None
        td = TrialData(trial, dataset, spec, truth, test)
        if config.tuned:
            fit, held = _carve(dataset)
            td.fit_master = td.fit_pooled = fit
            td.val_master, td.val_pooled = held[0], _pool(held)
    td.c = config.c if config.c is not None else default_constant(
        dataset.master, spec, config.solver)
    return td


def worker_shard(config: ExperimentConfig, machine_id: int, trial: int = 0) -> Shard:
    """The shard machine ``machine_id`` holds in trial ``trial``."""
    if not 1 <= machine_id < config.m:
        raise ConfigError(f"worker machine id must lie in [1, {config.m})")
    if isinstance(config.data, FileData):
        return prepare_trial(config, trial).dataset.shards[machine_id]
    synth = config.synth_for_trial(trial)
    return generate_shard(synth, machine_id, sample_beta_star(synth.p, synth.s, synth.seed))


# -- evaluation ----------------------------------------------------------------

class Evaluator:
    """Scores an estimate: errors against the truth, global objective, test metric."""

    def __init__(self, td: TrialData, timing: bool):
        self.td = td
        self.timing = timing
        self.lam_ref = td.lam_central()

    def row(self, method, round_, beta, payload, cumulative, iterations, seconds):
        td = self.td
        if td.truth is not None:
            l1, l2 = estimation_errors(beta, td.truth)
        else:
            l1 = l2 = NAN
        obj = baselines.global_objective(td.dataset, td.spec, self.lam_ref, beta)
        metric = NAN
        if td.test is not None:
            try:
                metric = test_metric(td.dataset.task, beta, td.test)
            except UndefinedMetricError as exc:
                log.warning("%s: %s", method, exc)
        wall = round(seconds * 1000.0, 3) if self.timing else 0
        return MetricRow(method, td.trial, round_, l1, l2, obj, metric, int(payload),
                         int(cumulative), int(iterations), wall)


def _trace_rows(ev, method, trace):
    rows, total = [], 0
    for rec in trace.records:
        total += rec.payload_bytes
        rows.append(ev.row(method, rec.round, rec.beta, rec.payload_bytes, total,
                           rec.iterations, rec.wall_time))
    return rows


def _grid(center, size):
    """``size`` log-spaced points spanning a factor 10 either side of ``center``."""
    if size == 1:
        return [center]
    return list(np.geomspace(10.0 * center, center / 10.0, size))


def _local_lambda(config, td):
    if not config.tuned:
        return td.lam_local()
    if "local" in td.tuned:
        return td.tuned["local"]
    fit = lambda lam: baselines.local(td.fit_master, td.spec, lam, config.solver)
    best, _ = baselines.tune_lambda(fit, _grid(td.lam_local(), config.grid_size),
                                    td.spec, td.val_master)
    td.tuned["local"] = best
    return best


def _central_lambda(config, td):
    if not config.tuned:
        return td.lam_central()
    if "central" in td.tuned:
        return td.tuned["central"]
    fit = lambda lam: baselines.centralize(td.fit_pooled, td.spec, lam, config.solver)
    best, _ = baselines.tune_lambda(fit, _grid(td.lam_central(), config.grid_size),
                                    td.spec, td.val_pooled)
    td.tuned["central"] = best
    return best


def _tuned_constant(config, td):
    """Constant c whose pooled-rate penalty equals the (tuned) centralized one."""
    if not config.tuned:
        return td.c
    return _central_lambda(config, td) / td.lam_central(1.0)


def schedule_for(config, td):
    s = config.edsl
    if s.schedule == PRACTICAL:
        return LambdaSchedule.practical(c=_tuned_constant(config, td), gamma=s.gamma)
    if s.schedule == FIXED:
        if s.value is None:
            raise ConfigError("[edsl] schedule = 'fixed' needs lambda")
        return LambdaSchedule.fixed(s.value)
    if s.schedule == THEORETICAL:
        return LambdaSchedule.theoretical(s.delta)
    raise ConfigError(f"unknown lambda schedule {s.schedule!r}")


def run_local(config, td, ev):
    started = time.perf_counter()
    report = baselines.local(td.dataset, td.spec, _local_lambda(config, td), config.solver,
                             full_output=True)
    return [ev.row("local", BASELINE_ROUND, report.beta_hat, 0, 0, report.iterations,
                   time.perf_counter() - started)]


def run_centralize(config, td, ev):
    started = time.perf_counter()
    report = baselines.centralize(td.dataset, td.spec, _central_lambda(config, td),
                                  config.solver, full_output=True)
    sent = baselines.centralize_bytes(td.m, td.n, td.p)
    return [ev.row("centralize", BASELINE_ROUND, report.beta_hat, sent, sent,
                   report.iterations, time.perf_counter() - started)]


def edsl_trace(config, td, transport=None):
    """The EDSL trace of one trial, in process or over ``transport``."""
    return run_edsl(td.dataset, td.spec, schedule_for(config, td), config.rounds,
                    config.solver, td.truth, transport)


def trace_rows(ev, method, trace):
    return _trace_rows(ev, method, trace)


def run_edsl_method(config, td, ev, transport=None):
    return _trace_rows(ev, "edsl", edsl_trace(config, td, transport))


def run_prox_gd(config, td, ev):
    c = _tuned_constant(config, td)
    init = baselines.local(td.dataset, td.spec, td.lam_local(c), config.solver)
    trace = baselines.prox_gd_distributed(td.dataset, td.spec, td.lam_central(c),
                                          step=config.prox_gd.step, rounds=config.rounds,
                                          init=init, truth=td.truth,
                                          solver_config=config.solver)
    if trace.flags.get("diverged"):
        log.warning("trial %d: prox_gd diverged", td.trial)
    return _trace_rows(ev, "prox_gd", trace)


def run_avg_debias(config, td, ev):
    s = config.avg_debias
    started = time.perf_counter()
    lam = s.lam if s.lam is not None else td.lam_local()
    gamma = s.gamma if s.gamma is not None else math.sqrt(math.log(max(td.p, 2)) / td.n)
    estimates, coh = baselines.debiased_estimates(td.dataset, td.spec, lam, gamma,
                                                  config.solver, force=s.force)
    tau = s.tau if s.tau is not None else td.lam_central()
    if config.tuned and s.tau is None:
        # only the threshold is tuned; refitting Theta per grid point is too costly
        def fit(value):
            return baselines.average_debiased(estimates, value).beta
        tau, _ = baselines.tune_lambda(fit, _grid(tau, config.grid_size), td.spec,
                                       td.val_pooled)
    result = baselines.average_debiased(estimates, tau, coh)
    if result.failed_machines:
        log.warning("trial %d: avg_debias dropped machines %s", td.trial,
                    result.failed_machines)
    sent = baselines.avg_debias_bytes(td.m, td.p)
    return [ev.row("avg_debias", BASELINE_ROUND, result.beta, sent, sent, 0,
                   time.perf_counter() - started)]


RUNNERS = {
    "local": run_local,
    "centralize": run_centralize,
    "prox_gd": run_prox_gd,
    "avg_debias": run_avg_debias,
    "edsl": run_edsl_method,
}


def failure_row(method, trial):
    return MetricRow(method, trial, BASELINE_ROUND, NAN, NAN, NAN, NAN, NAN, NAN, NAN, NAN)


def run_trial(config, trial):
    """Return ({method: rows}, [Failure]) for one trial."""
    td = prepare_trial(config, trial)
    ev = Evaluator(td, config.timing)
    rows, failures = {}, []
    for method in config.methods:
        try:
            rows[method] = RUNNERS[method](config, td, ev)
        except TransportError:
            raise
        except EdslError as exc:
            log.error("trial %d: %s failed: %s", trial, method, exc)
            rows[method] = [failure_row(method, trial)]
            failures.append(Failure(method, trial, type(exc).__name__, str(exc)))
    return rows, failures


def summarize(rows, failed=()):
    """Trial means per (method, round), skipping rows of failed runs."""
    skip = {(f.method, f.trial) for f in failed}
    groups = {}
    for r in rows:
        if (r.method, r.trial) in skip:
            continue
        groups.setdefault((r.method, r.round), []).append(r)
    out = []
    for (method, round_), members in groups.items():
        k = len(members)
        means = [sum(float(getattr(r, name)) for r in members) / k for name in HEADER[3:]]
        out.append([method, str(round_), str(k)] + [_fmt(v) for v in means])
    return out


def _csv_text(header, body):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()


def side_paths(path):
    path = Path(path)
    return (path.with_name(path.stem + ".summary.csv"),
            path.with_name(path.stem + ".failures.csv"))


def write_results(path, rows, failures=()):
    """Write the main CSV, the summary and (if any) the failures file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    summary_path, failure_path = side_paths(path)
    path.write_text(_csv_text(HEADER, [r.cells() for r in rows]))
    summary_path.write_text(_csv_text(SUMMARY_HEADER, summarize(rows, failures)))
    written = [path, summary_path]
    if failures:
        failure_path.write_text(_csv_text(
            FAILURE_HEADER, [[f.method, str(f.trial), f.error, f.message] for f in failures]))
        written.append(failure_path)
    elif failure_path.exists():
        failure_path.unlink()
    return written


def collect(config):
    """Run all trials; return (rows ordered by method, trial, round; failures)."""
    if config.parallelism > 1 and config.trials > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(lambda t: run_trial(config, t), range(config.trials)))
    else:
        results = [run_trial(config, t) for t in range(config.trials)]
    rows = [r for method in config.methods for per_trial, _ in results
            for r in per_trial[method]]
    failures = [f for _, fs in results for f in fs]
    return rows, failures


def run_experiment(config, out=None):
    """Run the experiment and write its CSVs; returns the written paths."""
    rows, failures = collect(config)
    return write_results(out or config.output, rows, failures)
