import numpy as np
import pytest

import oracles
from edsl.baselines import centralize, local
from edsl.datagen import SynthConfig, generate
from edsl.loss import average_gradient, loss_gradient
from edsl.model import Dataset, LossSpec
from edsl.protocol import LambdaSchedule, make_master, run_edsl
from edsl.protocol.edsl import edsl_init, edsl_round, payload_bytes_per_round
from edsl.protocol.schedule import lambda_at
from edsl.solver import ShiftedProblem, SolverConfig, solve

SQ, LG = LossSpec.squared(), LossSpec.logistic()


def test_zero_rounds():
    ds, gt = generate(SynthConfig(30, 10, 2, 2, seed=1))
    trace = run_edsl(ds, SQ, LambdaSchedule.practical(c=1.0), 0, truth=gt)
    assert len(trace) == 1
    assert trace[0].payload_bytes == 0 and trace[0].round == 0


@pytest.mark.parametrize("task", ["regression", "classification"])
def test_single_machine_is_warm_started_local_solves(task):
    ds, gt = generate(SynthConfig(60, 20, 1, 3, task=task, seed=2))
    spec = LossSpec.for_task(task)
    sched = LambdaSchedule.practical(c=1.0)
    trace = run_edsl(ds, spec, sched, 4)
    master = make_master(ds, spec, sched)
    lam0 = lambda_at(sched, 0, master.context)
    assert np.array_equal(trace[0].beta, local(ds, spec, lam0))
    beta = trace[0].beta
    for t in range(4):
        lam = lambda_at(sched, t + 1, master.context.at(beta))
        beta = solve(ShiftedProblem(spec, ds.master, None, lam), init=beta).beta_hat
        assert np.max(np.abs(trace[t + 1].beta - beta)) <= 1e-12
        assert trace[t + 1].payload_bytes == 0


def test_identical_shards_follow_single_machine_sequence():
    ds, _ = generate(SynthConfig(60, 20, 1, 3, seed=3))
    copies = Dataset(tuple(ds.master.with_id(j) for j in range(4)), ds.task)
    # the same lambda sequence on both sides (a practical floor would depend on m)
    sched = LambdaSchedule.fixed(0.05)
    single = run_edsl(ds, SQ, sched, 3)
    multi = run_edsl(copies, SQ, sched, 3)
    for a, b in zip(single.records, multi.records):
        assert np.max(np.abs(a.beta - b.beta)) <= 1e-12


def test_large_initial_lambda_gives_zero():
    ds, _ = generate(SynthConfig(30, 10, 2, 2, seed=4))
    lam = float(np.max(np.abs(loss_gradient(SQ, ds.master, np.zeros(10)))))
    beta0, rec = edsl_init(ds, SQ, LambdaSchedule.fixed(lam))
    assert np.all(beta0 == 0) and rec.payload_bytes == 0


def test_noiseless_init_is_accurate():
    ds, gt = generate(SynthConfig(400, 30, 2, 3, noise_sigma=0.0, seed=5))
    beta0, _ = edsl_init(ds, SQ, LambdaSchedule.fixed(1e-3))
    assert np.linalg.norm(beta0 - gt.beta_star) <= 0.05


def test_newton_round():
    rng = np.random.default_rng(6)
    ds, _ = generate(SynthConfig(50, 20, 3, 3, seed=6))
    master = make_master(ds, SQ, LambdaSchedule.fixed(0.0), SolverConfig(tol=1e-11))
    beta_t = rng.standard_normal(20) * 0.3
    beta_next, _ = edsl_round(master, beta_t, 0)
    ref = oracles.newton_step(ds.master.xs, ds.master.ys,
                              [(s.xs, s.ys) for s in ds.shards], beta_t)
    assert np.max(np.abs(beta_next - ref)) <= 1e-8


def test_shift_identity_each_round():
    ds, _ = generate(SynthConfig(30, 12, 3, 3, seed=7))
    master = make_master(ds, SQ, LambdaSchedule.practical(c=1.0))
    beta = master.init().beta
    for t in range(3):
        g1, gbar, _ = master.gather(beta, t)
        prob = ShiftedProblem.from_gradients(SQ, ds.master, g1, gbar, 0.1)
        assert np.array_equal(prob.smooth_value_grad(beta)[1], gbar)
        assert np.array_equal(gbar, average_gradient(SQ, ds.shards, beta))
        beta = master.step(beta, t).beta


def test_byte_accounting():
    ds, _ = generate(SynthConfig(30, 12, 5, 3, seed=8))
    trace = run_edsl(ds, SQ, LambdaSchedule.practical(c=1.0), 4)
    per = payload_bytes_per_round(5, 12)
    assert per == 2 * 4 * 12 * 8
    assert [r.payload_bytes for r in trace.records] == [0] + [per] * 4
    assert trace.cumulative_bytes()[-1] == 4 * per
    assert all(r.header_bytes == 2 * 4 * 16 for r in trace.records[1:])


def test_fixed_schedule_constant_lambda():
    ds, _ = generate(SynthConfig(30, 12, 3, 3, seed=9))
    trace = run_edsl(ds, SQ, LambdaSchedule.fixed(0.05), 3)
    assert [r.lam for r in trace.records] == [0.05] * 4


def test_theoretical_mode_records_condition():
    ds, gt = generate(SynthConfig(100, 20, 2, 2, task="classification", seed=10))
    trace = run_edsl(ds, LG, LambdaSchedule.theoretical(), 2, truth=gt)
    assert all("accuracy_condition" in r.diagnostics for r in trace.records)
    assert all(r.lam > 0 for r in trace.records)


def _desk(seed):
    return generate(SynthConfig(200, 400, 10, 5, seed=seed))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_well_conditioned_error_nonincreasing(seed):
    ds, gt = _desk(seed)
    trace = run_edsl(ds, SQ, LambdaSchedule.practical(), 5, truth=gt)
    errs = trace.l2_errors()
    for a, b in zip(errs[1:5], errs[2:6]):
        assert b <= 1.05 * a


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_contraction_before_reaching_centralized_error(seed):
    ds, gt = _desk(seed)
    master = make_master(ds, SQ, LambdaSchedule.practical(), truth=gt)
    trace = master.run(6)
    c = master.context.c
    cen = centralize(ds, SQ, c * np.sqrt(np.log(400) / (10 * 200)))
    target = 1.2 * float(np.abs(cen - gt.beta_star).sum())
    errs = [r.l1_error for r in trace.records]
    for a, b in zip(errs, errs[1:]):
        if a <= target:
            break
        assert b / a < 1
