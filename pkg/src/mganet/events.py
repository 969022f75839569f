"""Event records, frame <-> event conversion and the annotation TSV formats."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import EvalConfig


class DataError(ValueError):
    """Input data is malformed or references unknown classes."""


@dataclass(frozen=True, order=True)
class Event:
    clip_id: str
    onset: float
    offset: float
    label: str

    def __post_init__(self):
        if not self.onset < self.offset:
            raise DataError(f"event {self.label!r} in {self.clip_id!r} has onset {self.onset} >= offset {self.offset}")
        if self.onset < 0:
            raise DataError(f"event {self.label!r} in {self.clip_id!r} has negative onset {self.onset}")

    @property
    def length(self) -> float:
        return self.offset - self.onset


def median_filter_1d(x: np.ndarray, window: int) -> np.ndarray:
    """Median along axis 0 with edge replication, odd ``window``."""
    half = window // 2
    padded = np.pad(x, [(half, half)] + [(0, 0)] * (x.ndim - 1), mode="edge")
    views = np.lib.stride_tricks.sliding_window_view(padded, window, axis=0)
    return np.median(views, axis=-1)


def binarize_and_filter(strong: np.ndarray, config: EvalConfig | None = None) -> np.ndarray:
    """Threshold ``[T, K]`` probabilities, then median-filter each class track."""
    cfg = config or EvalConfig()
    active = (np.asarray(strong) > cfg.threshold).astype(np.float64)
    return median_filter_1d(active, cfg.median_window) > 0.5


def decode_events(active: np.ndarray, clip_id: str, classes: Sequence[str], config: EvalConfig | None = None) -> list[Event]:
    """Maximal runs of active frames per class become events at ``frame_hop`` resolution."""
    cfg = config or EvalConfig()
    events = []
    active = np.asarray(active, dtype=bool)
    for k, label in enumerate(classes):
        track = np.concatenate([[False], active[:, k], [False]]).astype(np.int8)
        edges = np.diff(track)
        starts, ends = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
        for s, e in zip(starts, ends):
            events.append(Event(clip_id, s * cfg.frame_hop, e * cfg.frame_hop, label))
    return events


def rasterize(events: Iterable[Event], classes: Sequence[str], n_frames: int, frame_hop: float) -> np.ndarray:
    """``[n_frames, K]`` targets; a frame is positive when an event covers at least half of it."""
    index = {c: k for k, c in enumerate(classes)}
    out = np.zeros((n_frames, len(classes)))
    starts = np.arange(n_frames) * frame_hop
    for ev in events:
        if ev.label not in index:
            raise DataError(f"unknown class {ev.label!r} in clip {ev.clip_id!r}")
        overlap = np.clip(np.minimum(starts + frame_hop, ev.offset) - np.maximum(starts, ev.onset), 0.0, None)
        out[overlap >= 0.5 * frame_hop - 1e-12, index[ev.label]] = 1.0
    return out


# -- TSV formats ---------------------------------------------------------
STRONG_HEADER = "filename\tonset\toffset\tevent_label"
WEAK_HEADER = "filename\tevent_labels"


def clip_id_of(filename: str) -> str:
    return Path(filename).stem


def write_annotations(path: str | Path, events: Iterable[Event]) -> None:
    lines = [STRONG_HEADER]
    for ev in sorted(events, key=lambda e: (e.clip_id, e.onset, e.offset, e.label)):
        lines.append(f"{ev.clip_id}.wav\t{ev.onset:.3f}\t{ev.offset:.3f}\t{ev.label}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_annotations(path: str | Path, classes: Sequence[str] | None = None) -> list[Event]:
    """Parse a strong-label TSV; errors carry the 1-based line number."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != STRONG_HEADER:
        raise DataError(f"{path}:1: expected header {STRONG_HEADER!r}")
    events = []
    for n, line in enumerate(text[1:], 2):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{n}: expected 4 tab-separated fields, got {len(parts)}")
        try:
            onset, offset = float(parts[1]), float(parts[2])
            ev = Event(clip_id_of(parts[0]), onset, offset, parts[3])
        except ValueError as exc:
            raise DataError(f"{path}:{n}: {exc}") from exc
        if classes is not None and ev.label not in classes:
            raise DataError(f"{path}:{n}: unknown class {ev.label!r}")
        events.append(ev)
    return events


def write_weak_labels(path: str | Path, labels: dict[str, Sequence[str]]) -> None:
    lines = [WEAK_HEADER] + [f"{cid}.wav\t{','.join(sorted(v))}" for cid, v in sorted(labels.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_weak_labels(path: str | Path, classes: Sequence[str] | None = None) -> dict[str, list[str]]:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != WEAK_HEADER:
        raise DataError(f"{path}:1: expected header {WEAK_HEADER!r}")
    out = {}
    for n, line in enumerate(text[1:], 2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{n}: expected 2 tab-separated fields")
        labels = [v for v in parts[1].split(",") if v]
        if classes is not None and any(v not in classes for v in labels):
            raise DataError(f"{path}:{n}: unknown class in {labels}")
        out[clip_id_of(parts[0])] = labels
    return out
