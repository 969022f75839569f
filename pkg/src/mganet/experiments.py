"""Toy-corpus experiments: end-to-end learning and the attention ablation grid."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import EvalConfig, ModelConfig, Order, ToyConfig, TrainingConfig
from .events import rasterize
from .features import log_mel, normalize
from .model import MGANet
from .toy_data import ToyCorpus, generate_toy_dataset
from .training import Clip, DatasetSplit, TrainState, build_split, evaluate, fit, predict

TOY_SEED = 7


def toy_model_config(**overrides) -> ModelConfig:
    return ModelConfig.tiny(n_classes=3, **overrides)


def toy_training_config(**overrides) -> TrainingConfig:
    """Schedules shortened to match a corpus with 8 optimizer steps per epoch."""
    base = dict(lr=3e-3, warmup_steps=30, ema_alpha=0.99, ramp_epochs=10, epochs=200)
    base.update(overrides)
    return TrainingConfig(**base)


@dataclass
class ToyData:
    corpus: ToyCorpus
    split: DatasetSplit
    holdout: list[Clip]

    @property
    def classes(self) -> tuple[str, ...]:
        return self.corpus.classes


def prepare_toy(toy: ToyConfig | None = None, seed: int = TOY_SEED, n_frames: int = 124) -> ToyData:
    corpus = generate_toy_dataset(toy or ToyConfig(), seed=seed)
    feats = {c.clip_id: normalize(log_mel(c.samples).values) for c in corpus.clips}
    split = build_split(
        feats,
        corpus.classes,
        {c.clip_id: c.events for c in corpus.split("strong")},
        {c.clip_id: c.labels for c in corpus.split("weak")},
        [c.clip_id for c in corpus.split("unlabeled")],
        n_frames,
        EvalConfig().frame_hop,
    )
    holdout = [Clip(c.clip_id, feats[c.clip_id]) for c in corpus.split("holdout")]
    return ToyData(corpus, split, holdout)


@dataclass
class CurvePoint:
    epoch: int
    seconds: float
    loss: float
    train_f1: float
    holdout_f1: float


@dataclass
class ToyResult:
    curve: list[CurvePoint] = field(default_factory=list)
    reached: bool = False
    timed_out: bool = False

    @property
    def last(self) -> CurvePoint:
        return self.curve[-1]


def train_toy(
    data: ToyData,
    model: ModelConfig | None = None,
    training: TrainingConfig | None = None,
    targets: tuple[float, float] = (0.90, 0.75),
    eval_every: int = 5,
    time_budget: float = 1800.0,
    log: Callable[[str], None] | None = None,
) -> ToyResult:
    """Train until the teacher meets both F1 targets at an evaluation point, the epoch limit or the time budget."""
    model = model or toy_model_config()
    training = training or toy_training_config()
    state = TrainState.create(MGANet(model, seed=training.seed), training)
    result = ToyResult()
    start = time.perf_counter()

    def on_epoch_end(st: TrainState, records: list[dict]) -> bool:
        elapsed = time.perf_counter() - start
        if st.epoch % eval_every and st.epoch < training.epochs and elapsed < time_budget:
            return False
        point = CurvePoint(
            st.epoch,
            elapsed,
            float(np.mean([r["total"] for r in records])),
            evaluate(st.teacher, data.split.strong, data.corpus.events("strong"), data.classes).macro_f1,
            evaluate(st.teacher, data.holdout, data.corpus.events("holdout"), data.classes).macro_f1,
        )
        result.curve.append(point)
        if log:
            log(
                f"epoch {point.epoch:3d}  {point.seconds:7.1f}s  loss {point.loss:.4f}"
                f"  F1 train {point.train_f1:.3f}  holdout {point.holdout_f1:.3f}"
            )
        result.reached = point.train_f1 >= targets[0] and point.holdout_f1 >= targets[1]
        result.timed_out = elapsed >= time_budget and not result.reached
        return result.reached or result.timed_out

    fit(state, data.split, training.epochs, on_epoch_end=on_epoch_end)
    return result


# -- ablation -----------------------------------------------------------------
ABLATIONS: dict[str, dict] = {
    "coarse_fine": {},
    "fine_coarse": {"order": Order.FINE_COARSE},
    "no_global": {"global_stage": False},
    "no_local": {"local_stage": False},
    "no_frame": {"frame_stage": False},
}


@dataclass
class AblationScore:
    name: str
    holdout_f1: float
    holdout_bce: float
    final_loss: float

    def line(self) -> str:
        return f"{self.name}\t{self.holdout_f1:.4f}\t{self.holdout_bce:.6f}\t{self.final_loss:.6f}"


def ablation_model(name: str, base: ModelConfig | None = None) -> ModelConfig:
    base = base or toy_model_config()
    return dataclasses.replace(base, mga=dataclasses.replace(base.mga, **ABLATIONS[name]))


def run_ablation(
    data: ToyData,
    epochs: int,
    names: list[str] | None = None,
    training: TrainingConfig | None = None,
    log: Callable[[str], None] | None = None,
) -> list[AblationScore]:
    """Train each configuration for ``epochs`` and score the teacher on the holdout set."""
    training = dataclasses.replace(training or toy_training_config(), epochs=epochs)
    refs = data.corpus.events("holdout")
    truth = np.stack([_frame_truth(data, c.clip_id) for c in data.holdout])
    scores = []
    for name in names or list(ABLATIONS):
        state = TrainState.create(MGANet(ablation_model(name), seed=training.seed), training)
        history = fit(state, data.split, epochs)
        probs, _ = predict(state.teacher, np.stack([c.features for c in data.holdout]))
        p = np.clip(probs, 1e-7, 1 - 1e-7)
        bce = float(-np.mean(truth * np.log(p) + (1 - truth) * np.log(1 - p)))
        f1 = evaluate(state.teacher, data.holdout, refs, data.classes).macro_f1
        score = AblationScore(name, f1, bce, float(np.mean([r["total"] for r in history if r["epoch"] == epochs - 1])))
        if log:
            log(score.line())
        scores.append(score)
    return scores


def _frame_truth(data: ToyData, clip_id: str) -> np.ndarray:
    clip = next(c for c in data.corpus.clips if c.clip_id == clip_id)
    return rasterize(clip.events, data.classes, 124, EvalConfig().frame_hop)
