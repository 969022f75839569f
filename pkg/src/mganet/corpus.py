"""Reading a corpus directory (audio manifest + metadata TSVs) and its extracted features back into training splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import DataError, Event, clip_id_of, read_annotations, read_weak_labels
from .features import normalize, read_features
from .training import Clip, DatasetSplit, build_split


@dataclass
class CorpusIndex:
    classes: tuple[str, ...]
    splits: dict[str, list[str]]  # split name -> clip ids, in manifest order
    strong_events: list[Event] = field(default_factory=list)
    holdout_events: list[Event] = field(default_factory=list)
    weak_labels: dict[str, list[str]] = field(default_factory=dict)


def read_corpus_index(corpus_dir: str | Path) -> CorpusIndex:
    root = Path(corpus_dir)
    meta = root / "metadata"
    for required in (root / "manifest.tsv", meta / "classes.txt"):
        if not required.is_file():
            raise DataError(f"corpus is missing {required}")
    classes = tuple(line.strip() for line in (meta / "classes.txt").read_text().splitlines() if line.strip())
    splits: dict[str, list[str]] = {}
    lines = (root / "manifest.tsv").read_text().splitlines()
    for n, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{root / 'manifest.tsv'}:{n}: expected filename, split, sha256")
        splits.setdefault(parts[1], []).append(clip_id_of(parts[0]))

    def optional(name, reader, empty):
        path = meta / name
        return reader(path, classes) if path.is_file() else empty

    return CorpusIndex(
        classes,
        splits,
        optional("strong.tsv", read_annotations, []),
        optional("holdout.tsv", read_annotations, []),
        optional("weak.tsv", read_weak_labels, {}),
    )


def load_features(features_dir: str | Path, clip_ids: list[str]) -> dict[str, np.ndarray]:
    """Per-clip normalized features keyed by clip id."""
    root = Path(features_dir)
    if not root.is_dir():
        raise DataError(f"features directory {root} does not exist")
    out = {}
    for cid in clip_ids:
        path = root / f"{cid}.mgaf"
        if not path.is_file():
            raise DataError(f"no features for clip {cid!r} in {root}")
        out[cid] = normalize(read_features(path))
    return out


def load_training_split(
    index: CorpusIndex, features_dir: str | Path, n_frames: int, frame_hop: float
) -> DatasetSplit:
    ids = [cid for name in ("strong", "weak", "unlabeled") for cid in index.splits.get(name, [])]
    feats = load_features(features_dir, ids)
    by_clip: dict[str, list[Event]] = {cid: [] for cid in index.splits.get("strong", [])}
    for ev in index.strong_events:
        if ev.clip_id not in by_clip:
            raise DataError(f"strong annotation for clip {ev.clip_id!r}, which is not in the strong split")
        by_clip[ev.clip_id].append(ev)
    weak = {cid: index.weak_labels.get(cid, []) for cid in index.splits.get("weak", [])}
    return build_split(feats, index.classes, by_clip, weak, index.splits.get("unlabeled", []), n_frames, frame_hop)


def load_clips(features_dir: str | Path, clip_ids: list[str]) -> list[Clip]:
    feats = load_features(features_dir, clip_ids)
    return [Clip(cid, feats[cid]) for cid in clip_ids]
