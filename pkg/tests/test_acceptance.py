"""Acceptance criteria, one test and one PASS/FAIL line each.

The toy training and ablation runs take most of the suite's time (about 15 minutes on one core).
"""

import time

import numpy as np
import pytest

from mganet.config import TrainingConfig
from mganet.experiments import prepare_toy, run_ablation, train_toy
from mganet.metric_fixtures import CASES
from mganet.model import MGANet
from mganet.training import TrainState, consistency_weight, ema_update, make_batch, train_step
from mganet.verify import gradient_suite, ldsa_suite, metric_suite, shape_suite, shift_suite


def _summary(rows):
    return "; ".join(f"{r.name} ({r.detail})" for r in rows if not r.passed) or f"{len(rows)} checks"


@pytest.fixture(scope="module")
def toy():
    return prepare_toy()


@pytest.fixture(scope="module")
def shapes():
    return shape_suite()


@pytest.mark.xfail(reason="benchmark numbers need the DCASE corpus and GPU training", strict=True)
def test_benchmark_numbers(report):
    report("benchmark reproduction", False, "not attempted; needs the DCASE corpus and GPU-scale training")
    assert False


def test_gradient_integrity(report):
    start = time.perf_counter()
    rows = gradient_suite(seed=0)
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in rows) and elapsed <= 300
    report("gradient integrity", ok, f"{_summary(rows)}, h=1e-4, tol 1e-3, {elapsed:.0f}s")
    assert ok


def test_shift_exactness(report):
    rows = shift_suite(n_tensors=100)
    ok = all(r.passed for r in rows)
    report("shift exactness", ok, rows[0].detail)
    assert ok


def test_ldsa_oracle(report):
    rows = ldsa_suite()
    ok = all(r.passed for r in rows)
    report("LDSA oracle", ok, rows[0].detail)
    assert ok


def test_shape_pipeline(report, shapes):
    rows = [r for r in shapes if "->" in r.name or "strong" in r.name]
    ok = len(rows) == 2 and all(r.passed for r in rows)
    report("shape pipeline", ok, "; ".join(f"{r.name}: {r.detail}" for r in rows))
    assert ok


def test_normalization_invariants(report, shapes):
    from mganet.tensor import Tensor, softmax

    rows = [r for r in shapes if "rows" in r.name or "(0, 1)" in r.name]
    logits = np.random.default_rng(0).standard_normal((50, 7)) * 30
    dev = float(np.max(np.abs(softmax(Tensor(logits)).data.sum(axis=-1) - 1)))
    ok = len(rows) == 2 and all(r.passed for r in rows) and dev <= 1e-9
    report("normalization invariants", ok, "; ".join(f"{r.name}: {r.detail}" for r in rows) + f"; softmax dev {dev:.1e}")
    assert ok


def test_mean_teacher_invariants(report, toy):
    from mganet.experiments import toy_model_config

    student, teacher = MGANet(toy_model_config(), seed=0), MGANet(toy_model_config(), seed=1)
    frozen = [p.data.copy() for p in teacher.parameters()]
    ema_update(teacher, student, 1.0)
    freezes = all(np.array_equal(a, p.data) for a, p in zip(frozen, teacher.parameters()))
    ema_update(teacher, student, 0.0)
    copies = all(np.array_equal(t.data, s.data) for (_, t), (_, s) in zip(teacher.named_state(), student.named_state()))

    cfg = TrainingConfig(batch_strong=1, batch_weak=1, batch_unlabeled=1, warmup_steps=1)
    state = TrainState.create(MGANet(toy_model_config(), seed=0), cfg)
    split = toy.split
    train_step(make_batch(split.strong[:1], split.weak[:1], split.unlabeled[:1]), state, 3)
    no_grad = all(p.grad is None for p in state.teacher.parameters())

    ramp = all(
        abs(consistency_weight(e, cfg) - 2.0 * np.exp(-5 * (1 - min(1, e / 30)) ** 2)) <= 1e-12 for e in range(0, 60, 3)
    )
    ok = freezes and copies and no_grad and ramp
    report("Mean Teacher invariants", ok, f"alpha=1 freezes {freezes}, alpha=0 copies {copies}, teacher grads absent {no_grad}, ramp {ramp}")
    assert ok


def test_end_to_end_learning(report, toy):
    result = train_toy(toy, log=print)
    last = result.last
    ok = result.reached and last.epoch <= 200 and last.seconds <= 1800
    detail = f"epoch {last.epoch}, {last.seconds / 60:.1f} min, teacher F1 train {last.train_f1:.3f} holdout {last.holdout_f1:.3f}"
    report("end-to-end learning", ok, detail + " (targets 0.90 / 0.75 within 200 epochs, 30 min)")
    assert ok


def test_ablation_machinery(report, toy):
    scores = run_ablation(toy, epochs=6, log=print)
    keys = [(round(s.holdout_f1, 6), round(s.holdout_bce, 6)) for s in scores]
    finite = all(np.isfinite(s.holdout_bce) and np.isfinite(s.final_loss) for s in scores)
    ok = len(scores) == 5 and finite and len(set(keys)) == len(keys)
    detail = ", ".join(f"{s.name} F1 {s.holdout_f1:.3f} BCE {s.holdout_bce:.4f}" for s in scores)
    report("ablation machinery", ok, detail)
    assert ok


def test_metric_fixtures(report):
    rows = metric_suite()
    ok = len(CASES) >= 10 and all(r.passed for r in rows)
    report("metric fixtures", ok, f"{len(CASES)} hand-scored cases plus the shipped TSV fixture, {_summary(rows)}")
    assert ok
