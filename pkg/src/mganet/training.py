"""Mean Teacher training: losses, EMA teacher, Adam with warmup, batching and the epoch loop."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ConfigError, EvalConfig, TrainingConfig
from .events import DataError, Event, binarize_and_filter, decode_events, rasterize
from .functional import bce
from .metrics import ScoreReport, event_based_f1
from .model import MGANet, ModelOutput, load_checkpoint, load_state, save_checkpoint, save_state
from .nn import Module
from .tensor import Tensor, add, backward, mean, mul, no_grad, sub

logger = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass
class Clip:
    clip_id: str
    features: np.ndarray  # normalized [frames, mels]
    frame_labels: np.ndarray | None = None  # [T', K] for strong clips
    clip_labels: np.ndarray | None = None  # [K] for strong and weak clips


@dataclass
class DatasetSplit:
    strong: list[Clip] = field(default_factory=list)
    weak: list[Clip] = field(default_factory=list)
    unlabeled: list[Clip] = field(default_factory=list)

    def __post_init__(self):
        ids = [c.clip_id for c in self.strong + self.weak + self.unlabeled]
        if len(ids) != len(set(ids)):
            raise DataError("strong, weak and unlabeled sets must be disjoint by clip id")


def build_split(
    features: dict[str, np.ndarray],
    classes: Sequence[str],
    strong_events: dict[str, list[Event]],
    weak_labels: dict[str, Sequence[str]],
    unlabeled: Sequence[str],
    n_frames: int,
    frame_hop: float,
) -> DatasetSplit:
    index = {c: k for k, c in enumerate(classes)}

    def multi_hot(labels):
        v = np.zeros(len(classes))
        for lab in labels:
            if lab not in index:
                raise DataError(f"unknown class {lab!r}")
            v[index[lab]] = 1.0
        return v

    strong = []
    for cid, evs in strong_events.items():
        frames = rasterize(evs, classes, n_frames, frame_hop)
        strong.append(Clip(cid, features[cid], frames, multi_hot({e.label for e in evs})))
    weak = [Clip(cid, features[cid], None, multi_hot(labs)) for cid, labs in weak_labels.items()]
    unl = [Clip(cid, features[cid]) for cid in unlabeled]
    return DatasetSplit(strong, weak, unl)


@dataclass
class Batch:
    features: np.ndarray  # [N, frames, mels], strong clips first, then weak, then unlabeled
    frame_targets: np.ndarray  # [n_strong, T', K]
    clip_targets: np.ndarray  # [n_strong + n_weak, K]

    @property
    def n_strong(self) -> int:
        return len(self.frame_targets)

    @property
    def n_labeled(self) -> int:
        return len(self.clip_targets)


def make_batch(strong: Sequence[Clip], weak: Sequence[Clip], unlabeled: Sequence[Clip]) -> Batch:
    clips = list(strong) + list(weak) + list(unlabeled)
    k = next((c.clip_labels.size for c in clips if c.clip_labels is not None), 0)
    t = next((c.frame_labels.shape[0] for c in strong), 0)
    frames = np.stack([c.frame_labels for c in strong]) if strong else np.zeros((0, t, k))
    labels = [c.clip_labels for c in strong] + [c.clip_labels for c in weak]
    return Batch(
        np.stack([c.features for c in clips]),
        frames,
        np.stack(labels) if labels else np.zeros((0, k)),
    )


@dataclass
class LossBreakdown:
    strong_bce: Tensor
    weak_bce: Tensor
    consistency_mse: Tensor
    total: Tensor
    weight: float = 0.0

    def values(self) -> dict[str, float]:
        return {
            "strong_bce": self.strong_bce.item(),
            "weak_bce": self.weak_bce.item(),
            "consistency_mse": self.consistency_mse.item(),
            "total": self.total.item(),
        }


def _mse(a: Tensor, b: np.ndarray) -> Tensor:
    d = sub(a, b)
    return mean(mul(d, d))


def compute_loss(student: ModelOutput, teacher: ModelOutput | None, batch: Batch, weight: float) -> LossBreakdown:
    """BCE on labeled parts plus ``weight`` times student/teacher MSE over every clip.

    Teacher outputs enter only as constants.
    """
    ns, nl = batch.n_strong, batch.n_labeled
    zero = Tensor(0.0)
    strong = bce(student.strong[:ns], batch.frame_targets) if ns else zero
    weak = bce(student.weak[:nl], batch.clip_targets) if nl else zero
    if teacher is not None:
        cons = add(_mse(student.strong, teacher.strong.data), _mse(student.weak, teacher.weak.data))
    else:
        cons = zero
    total = add(add(strong, weak), mul(cons, weight))
    return LossBreakdown(strong, weak, cons, total, weight)


def consistency_weight(epoch: float, config: TrainingConfig) -> float:
    """Sigmoid-shaped ramp-up ``max_weight * exp(-5 (1 - min(1, epoch / ramp))^2)``."""
    if config.ramp_epochs <= 0:
        return config.consistency_max_weight
    phase = 1.0 - min(1.0, epoch / config.ramp_epochs)
    return config.consistency_max_weight * math.exp(-5.0 * phase * phase)


def ema_update(teacher: Module, student: Module, alpha: float) -> None:
    """``teacher <- alpha * teacher + (1 - alpha) * student`` over parameters and buffers."""
    t_state, s_state = dict(teacher.named_state()), dict(student.named_state())
    if t_state.keys() != s_state.keys():
        raise ConfigError("teacher and student registries differ")
    for name, t in t_state.items():
        s = s_state[name]
        if t.shape != s.shape:
            raise ConfigError(f"{name}: teacher shape {t.shape} != student shape {s.shape}")
        t.data *= alpha
        t.data += (1.0 - alpha) * s.data


def make_teacher(student: MGANet) -> MGANet:
    """Deep copy whose parameters are untracked, so no gradient can reach them."""
    teacher = copy.deepcopy(student)
    for p in teacher.parameters():
        p.requires_grad = False
        p.grad = None
    return teacher


class Adam:
    """Adaptive-moment updates with a linear learning-rate warmup."""

    def __init__(self, params: Sequence, config: TrainingConfig):
        self.params = list(params)
        self.cfg = config
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def lr(self) -> float:
        warm = self.cfg.warmup_steps
        return self.cfg.lr * (min(1.0, self.step_count / warm) if warm > 0 else 1.0)

    def step(self) -> None:
        self.step_count += 1
        c = self.cfg
        lr = self.lr()
        bc1 = 1.0 - c.beta1**self.step_count
        bc2 = 1.0 - c.beta2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        out = {"step": np.array([float(self.step_count)])}
        for p, m, v in zip(self.params, self.m, self.v):
            out[f"m.{p.name}"] = m
            out[f"v.{p.name}"] = v
        return out

    def load(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(state["step"][0])
        for i, p in enumerate(self.params):
            self.m[i][...] = state[f"m.{p.name}"]
            self.v[i][...] = state[f"v.{p.name}"]


@dataclass
class TrainState:
    student: MGANet
    teacher: MGANet
    optimizer: Adam
    config: TrainingConfig
    student_rng: np.random.Generator
    teacher_rng: np.random.Generator
    epoch: int = 0

    @classmethod
    def create(cls, student: MGANet, config: TrainingConfig) -> "TrainState":
        base = np.random.default_rng(config.seed)
        s_seed, t_seed = base.integers(2**63, size=2)
        return cls(
            student,
            make_teacher(student),
            Adam(student.parameters(), config),
            config,
            np.random.default_rng(int(s_seed)),
            np.random.default_rng(int(t_seed)),
        )


def ema_alpha_at(step: int, alpha: float) -> float:
    """Early steps average over the history seen so far instead of the fixed decay."""
    return min(1.0 - 1.0 / (step + 1), alpha)


def train_step(batch: Batch, state: TrainState, epoch: float) -> LossBreakdown:
    cfg = state.config
    noisy = lambda rng: batch.features + cfg.noise_sigma * rng.standard_normal(batch.features.shape)  # noqa: E731
    x_student = noisy(state.student_rng)
    x_teacher = noisy(state.teacher_rng)
    weight = consistency_weight(epoch, cfg)
    with no_grad():
        t_out = state.teacher(x_teacher, train=True, rng=state.teacher_rng, update_stats=False)
    s_out = state.student(x_student, train=True, rng=state.student_rng)
    losses = compute_loss(s_out, t_out, batch, weight)
    values = losses.values()
    if not all(math.isfinite(v) for v in values.values()):
        raise NumericError(f"non-finite loss at epoch {epoch}: {values}")
    state.optimizer.zero_grad()
    backward(losses.total)
    state.optimizer.step()
    ema_update(state.teacher, state.student, ema_alpha_at(state.optimizer.step_count, cfg.ema_alpha))
    return losses


def iterate_batches(split: DatasetSplit, config: TrainingConfig, rng: np.random.Generator):
    """One epoch: a pass over the strong set; weak and unlabeled clips are drawn cyclically alongside."""
    strong = rng.permutation(len(split.strong))
    weak = rng.permutation(len(split.weak))
    unl = rng.permutation(len(split.unlabeled))
    n_steps = max(1, math.ceil(len(strong) / max(1, config.batch_strong))) if len(strong) else 1
    for i in range(n_steps):

        def pick(order, pool, size):
            if not len(order) or size == 0:
                return []
            return [pool[order[(i * size + j) % len(order)]] for j in range(size)]

        yield make_batch(
            pick(strong, split.strong, config.batch_strong),
            pick(weak, split.weak, config.batch_weak),
            pick(unl, split.unlabeled, config.batch_unlabeled),
        )


def predict(model: MGANet, features: np.ndarray, batch_size: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode strong ``[N, T', K]`` and weak ``[N, K]`` probabilities."""
    strong, weak = [], []
    with no_grad():
        for i in range(0, len(features), batch_size):
            out = model(features[i : i + batch_size], train=False)
            strong.append(out.strong.data)
            weak.append(out.weak.data)
    return np.concatenate(strong), np.concatenate(weak)


def detect_events(
    model: MGANet, clips: Sequence[Clip], classes: Sequence[str], config: EvalConfig | None = None
) -> list[Event]:
    cfg = config or EvalConfig()
    if not clips:
        return []
    strong, _ = predict(model, np.stack([c.features for c in clips]))
    events = []
    for clip, probs in zip(clips, strong):
        events += decode_events(binarize_and_filter(probs, cfg), clip.clip_id, classes, cfg)
    return events


def evaluate(
    model: MGANet,
    clips: Sequence[Clip],
    refs: Sequence[Event],
    classes: Sequence[str],
    config: EvalConfig | None = None,
) -> ScoreReport:
    return event_based_f1(refs, detect_events(model, clips, classes, config), config, classes)


def save_train_state(directory: str | Path, state: TrainState) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_checkpoint(d / "student.mgac", state.student)
    save_checkpoint(d / "teacher.mgac", state.teacher)
    extra = state.optimizer.state()
    extra["epoch"] = np.array([float(state.epoch)])
    save_state(d / "optimizer.mgac", extra)
    # RNG streams are saved too, so a resumed run draws the same noise and dropout masks
    rngs = {"student": state.student_rng.bit_generator.state, "teacher": state.teacher_rng.bit_generator.state}
    (d / "rng.json").write_text(json.dumps(rngs))


def load_train_state(directory: str | Path, state: TrainState) -> None:
    d = Path(directory)
    load_checkpoint(d / "student.mgac", state.student)
    load_checkpoint(d / "teacher.mgac", state.teacher)
    extra = load_state(d / "optimizer.mgac")
    state.optimizer.load(extra)
    state.epoch = int(extra["epoch"][0])
    rng_file = d / "rng.json"
    if rng_file.exists():
        rngs = json.loads(rng_file.read_text())
        state.student_rng.bit_generator.state = rngs["student"]
        state.teacher_rng.bit_generator.state = rngs["teacher"]


def fit(
    state: TrainState,
    split: DatasetSplit,
    epochs: int,
    log_file: str | Path | None = None,
    on_epoch_end: Callable[[TrainState, list[dict]], bool | None] | None = None,
) -> list[dict]:
    """Run epochs from ``state.epoch``; ``on_epoch_end`` returning True stops early."""
    history = []
    shuffle = np.random.default_rng(state.config.seed + 1)
    # skip shuffles of completed epochs so resumed runs see the same batch order
    for _ in range(state.epoch):
        list(iterate_batches(split, state.config, shuffle))
    log = open(log_file, "a") if log_file else None
    try:
        while state.epoch < epochs:
            epoch_records = []
            for batch in iterate_batches(split, state.config, shuffle):
                losses = train_step(batch, state, state.epoch)
                rec = {"epoch": state.epoch, "step": state.optimizer.step_count, **losses.values()}
                epoch_records.append(rec)
                if log:
                    log.write(json.dumps(rec) + "\n")
            state.epoch += 1
            history += epoch_records
            mean_total = float(np.mean([r["total"] for r in epoch_records]))
            logger.info("epoch %d  loss %.4f", state.epoch, mean_total)
            if on_epoch_end is not None and on_epoch_end(state, epoch_records):
                break
    finally:
        if log:
            log.close()
    return history
