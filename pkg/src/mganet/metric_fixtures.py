"""Hand-scored event-matching cases with 0.2 s collars, used by the verify suite and the tests.

Expected counts were worked out by hand from the collar rules: onsets within
0.2 s, offsets within max(0.2 s, 20% of the reference length), one-to-one.
"""

from __future__ import annotations

from dataclasses import dataclass

from .events import Event


@dataclass(frozen=True)
class MetricCase:
    name: str
    refs: tuple[Event, ...]
    preds: tuple[Event, ...]
    classes: tuple[str, ...]
    counts: dict  # class -> (tp, fp, fn)
    macro_f1: float


def _ev(onset, offset, label="a", clip="c1"):
    return Event(clip, onset, offset, label)


CASES = (
    MetricCase("exact match", (_ev(1.0, 2.0),), (_ev(1.0, 2.0),), ("a",), {"a": (1, 0, 0)}, 1.0),
    MetricCase("onset late by exactly 0.2", (_ev(1.0, 2.0),), (_ev(1.2, 2.0),), ("a",), {"a": (1, 0, 0)}, 1.0),
    MetricCase("onset early by exactly 0.2", (_ev(1.0, 2.0),), (_ev(0.8, 2.0),), ("a",), {"a": (1, 0, 0)}, 1.0),
    MetricCase("onset late by 0.201", (_ev(1.0, 2.0),), (_ev(1.201, 2.0),), ("a",), {"a": (0, 1, 1)}, 0.0),
    MetricCase("offset late by exactly 0.2", (_ev(1.0, 2.0),), (_ev(1.0, 2.2),), ("a",), {"a": (1, 0, 0)}, 1.0),
    MetricCase("offset collar 20% of 5 s", (_ev(0.0, 5.0),), (_ev(0.1, 6.0),), ("a",), {"a": (1, 0, 0)}, 1.0),
    MetricCase("offset beyond 20% of 5 s", (_ev(0.0, 5.0),), (_ev(0.1, 6.01),), ("a",), {"a": (0, 1, 1)}, 0.0),
    MetricCase(
        "two predictions for one reference",
        (_ev(1.0, 2.0),),
        (_ev(1.0, 2.0), _ev(1.05, 2.0)),
        ("a",),
        {"a": (1, 1, 0)},
        2 / 3,
    ),
    MetricCase(
        "two references for one prediction",
        (_ev(1.0, 2.0), _ev(1.1, 2.1)),
        (_ev(1.05, 2.05),),
        ("a",),
        {"a": (1, 0, 1)},
        2 / 3,
    ),
    MetricCase("no references", (), (_ev(1.0, 2.0),), ("a",), {"a": (0, 1, 0)}, 0.0),
    MetricCase("no predictions", (_ev(1.0, 2.0),), (), ("a",), {"a": (0, 0, 1)}, 0.0),
    MetricCase("both empty", (), (), ("a",), {"a": (0, 0, 0)}, 0.0),
    MetricCase(
        "same times in another clip",
        (_ev(1.0, 2.0, clip="c1"),),
        (_ev(1.0, 2.0, clip="c2"),),
        ("a",),
        {"a": (0, 1, 1)},
        0.0,
    ),
    MetricCase(
        "label mismatch",
        (_ev(1.0, 2.0, "a"),),
        (_ev(1.0, 2.0, "b"),),
        ("a", "b"),
        {"a": (0, 0, 1), "b": (0, 1, 0)},
        0.0,
    ),
    MetricCase(
        "macro over a perfect and an empty class",
        (_ev(1.0, 2.0, "a"),),
        (_ev(1.0, 2.0, "a"),),
        ("a", "b"),
        {"a": (1, 0, 0), "b": (0, 0, 0)},
        0.5,
    ),
    MetricCase(
        "mixed counts across two classes",
        (_ev(0.0, 1.0, "a"), _ev(3.0, 4.0, "a"), _ev(5.0, 9.0, "b")),
        (_ev(0.1, 1.1, "a"), _ev(6.0, 7.0, "a"), _ev(5.2, 9.8, "b"), _ev(0.0, 0.5, "b")),
        ("a", "b"),
        {"a": (1, 1, 1), "b": (1, 1, 0)},
        (0.5 + 2 / 3) / 2,
    ),
)
