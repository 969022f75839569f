"""Synthetic corpus of 10 s clips with tone/noise events at known times."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ToyConfig
from .events import Event, write_annotations, write_weak_labels
from .features import write_wav

SAMPLE_RATE = 16000
SPLITS = ("strong", "weak", "unlabeled", "holdout")


def _signature(label: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Waveform for one event class; ``tone_<hz>`` is a sine, ``noise_<k>k`` is band noise around k kHz."""
    t = np.arange(n) / SAMPLE_RATE
    kind, _, arg = label.partition("_")
    if kind == "tone":
        return np.sin(2 * np.pi * float(arg) * t + rng.uniform(0, 2 * np.pi))
    if kind == "noise":
        center = float(arg.rstrip("k")) * 1000.0
        spec = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
        spec[np.abs(freqs - center) > 1000.0] = 0.0
        sig = np.fft.irfft(spec, n)
        return sig / (np.abs(sig).max() + 1e-12)
    raise ValueError(f"unknown toy class signature {label!r}")


@dataclass
class ToyClip:
    clip_id: str
    split: str
    samples: np.ndarray
    events: list[Event] = field(default_factory=list)

    @property
    def labels(self) -> list[str]:
        return sorted({e.label for e in self.events})


@dataclass
class ToyCorpus:
    classes: tuple[str, ...]
    clips: list[ToyClip]

    def split(self, name: str) -> list[ToyClip]:
        return [c for c in self.clips if c.split == name]

    def events(self, name: str) -> list[Event]:
        return [e for c in self.split(name) for e in c.events]


def _place_events(cfg: ToyConfig, clip_id: str, rng: np.random.Generator) -> list[Event]:
    events: list[Event] = []
    count = int(rng.integers(cfg.min_events, cfg.max_events + 1))
    for _ in range(100):
        if len(events) == count:
            break
        label = cfg.classes[int(rng.integers(len(cfg.classes)))]
        dur = rng.uniform(cfg.min_duration, cfg.max_duration)
        onset = round(float(rng.uniform(0.0, cfg.clip_seconds - dur)), 3)
        offset = round(min(onset + dur, cfg.clip_seconds), 3)
        # same-class events must not overlap or touch, so every annotated event stays separable
        if any(e.label == label and onset < e.offset + 0.5 and e.onset < offset + 0.5 for e in events):
            continue
        events.append(Event(clip_id, onset, offset, label))
    return sorted(events, key=lambda e: e.onset)


def _render(cfg: ToyConfig, events: list[Event], rng: np.random.Generator) -> np.ndarray:
    n = int(round(cfg.clip_seconds * SAMPLE_RATE))
    audio = cfg.noise_level * rng.standard_normal(n)
    fade = int(0.01 * SAMPLE_RATE)
    for ev in events:
        a, b = int(round(ev.onset * SAMPLE_RATE)), int(round(ev.offset * SAMPLE_RATE))
        sig = _signature(ev.label, b - a, rng) * rng.uniform(0.2, 0.4)
        ramp = np.ones(b - a)
        ramp[:fade] = np.linspace(0.0, 1.0, fade)
        ramp[-fade:] = np.linspace(1.0, 0.0, fade)
        audio[a:b] += sig * ramp
    return np.clip(audio, -1.0, 32767 / 32768)


def generate_toy_dataset(cfg: ToyConfig | None = None, seed: int = 0) -> ToyCorpus:
    """Clips for the strong, weak, unlabeled and holdout splits; every clip has ground-truth events."""
    cfg = cfg or ToyConfig()
    rng = np.random.default_rng(seed)
    counts = {"strong": cfg.n_strong, "weak": cfg.n_weak, "unlabeled": cfg.n_unlabeled, "holdout": cfg.n_holdout}
    clips = []
    for split in SPLITS:
        for i in range(counts[split]):
            clip_id = f"{split}_{i:04d}"
            events = _place_events(cfg, clip_id, rng)
            samples = _render(cfg, events, rng)
            # round-trip through 16-bit PCM so in-memory and on-disk corpora agree exactly
            samples = np.clip(np.round(samples * 32768.0), -32768, 32767) / 32768.0
            clips.append(ToyClip(clip_id, split, samples, events))
    return ToyCorpus(tuple(cfg.classes), clips)


def write_corpus(corpus: ToyCorpus, out_dir: str | Path) -> Path:
    """Write WAVs, annotation TSVs and a manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    (out / "metadata").mkdir(parents=True, exist_ok=True)
    rows = ["filename\tsplit\tsha256"]
    for clip in corpus.clips:
        path = out / "audio" / f"{clip.clip_id}.wav"
        write_wav(path, clip.samples)
        rows.append(f"{path.name}\t{clip.split}\t{hashlib.sha256(path.read_bytes()).hexdigest()}")
    write_annotations(out / "metadata" / "strong.tsv", corpus.events("strong"))
    write_annotations(out / "metadata" / "holdout.tsv", corpus.events("holdout"))
    write_weak_labels(out / "metadata" / "weak.tsv", {c.clip_id: c.labels for c in corpus.split("weak")})
    (out / "metadata" / "unlabeled.tsv").write_text(
        "filename\n" + "".join(f"{c.clip_id}.wav\n" for c in corpus.split("unlabeled"))
    )
    (out / "metadata" / "classes.txt").write_text("\n".join(corpus.classes) + "\n")
    manifest = out / "manifest.tsv"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest
