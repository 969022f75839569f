"""Event-based F1 with onset/offset collars, macro-averaged over classes."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .config import EvalConfig
from .events import Event

# absorbs decimal round-off so a difference of exactly one collar still matches
_TOL = 1e-9


@dataclass
class ClassScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass
class ScoreReport:
    per_class: dict[str, ClassScore] = field(default_factory=dict)

    @property
    def macro_f1(self) -> float:
        if not self.per_class:
            return 0.0
        return sum(s.f1 for s in self.per_class.values()) / len(self.per_class)

    def lines(self) -> list[str]:
        """Machine-readable ``class<TAB>tp<TAB>fp<TAB>fn<TAB>f1`` records plus a macro line."""
        out = [f"{c}\t{s.tp}\t{s.fp}\t{s.fn}\t{s.f1:.4f}" for c, s in self.per_class.items()]
        out.append(f"macro\t-\t-\t-\t{self.macro_f1:.4f}")
        return out

    def table(self) -> str:
        width = max([len(c) for c in self.per_class] + [5])
        rows = [f"{'class':<{width}}  {'TP':>4} {'FP':>4} {'FN':>4}  {'P':>6} {'R':>6} {'F1':>6}"]
        for c, s in self.per_class.items():
            rows.append(
                f"{c:<{width}}  {s.tp:>4} {s.fp:>4} {s.fn:>4}  {s.precision:6.3f} {s.recall:6.3f} {s.f1:6.3f}"
            )
        rows.append(f"{'macro':<{width}}  {'':>4} {'':>4} {'':>4}  {'':>6} {'':>6} {self.macro_f1:6.3f}")
        return "\n".join(rows)


def offset_collar(ref: Event, config: EvalConfig) -> float:
    return max(config.offset_collar, config.offset_collar_rate * ref.length)


def matches(ref: Event, pred: Event, config: EvalConfig) -> bool:
    return (
        abs(pred.onset - ref.onset) <= config.onset_collar + _TOL
        and abs(pred.offset - ref.offset) <= offset_collar(ref, config) + _TOL
    )


def match_events(refs: Sequence[Event], preds: Sequence[Event], config: EvalConfig) -> int:
    """Greedy one-to-one matching in onset order; returns the number of matched pairs."""
    preds = sorted(preds, key=lambda e: (e.onset, e.offset))
    used = [False] * len(preds)
    hits = 0
    for ref in sorted(refs, key=lambda e: (e.onset, e.offset)):
        for j, pred in enumerate(preds):
            if not used[j] and matches(ref, pred, config):
                used[j] = True
                hits += 1
                break
    return hits


def event_based_f1(
    refs: Iterable[Event],
    preds: Iterable[Event],
    config: EvalConfig | None = None,
    classes: Sequence[str] | None = None,
) -> ScoreReport:
    """Per-class TP/FP/FN and macro F1.

    ``classes`` fixes the averaging set; it defaults to every label seen in
    either list. A class with neither references nor predictions scores 0.
    """
    cfg = config or EvalConfig()
    refs, preds = list(refs), list(preds)
    labels = list(classes) if classes is not None else sorted({e.label for e in refs} | {e.label for e in preds})
    groups: dict[tuple[str, str], tuple[list, list]] = defaultdict(lambda: ([], []))
    for e in refs:
        groups[(e.clip_id, e.label)][0].append(e)
    for e in preds:
        groups[(e.clip_id, e.label)][1].append(e)
    report = ScoreReport({c: ClassScore() for c in labels})
    for (_, label), (r, p) in groups.items():
        if label not in report.per_class:
            continue
        hits = match_events(r, p, cfg)
        score = report.per_class[label]
        score.tp += hits
        score.fp += len(p) - hits
        score.fn += len(r) - hits
    return report
