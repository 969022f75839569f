"""Configuration records and the ``section.key = value`` text format."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class ConvBlockVariant(str, enum.Enum):
    V_CONV = "v"
    RV_CONV = "rv"
    RA_CONV = "ra"
    RH_CONV = "rh"


class Order(str, enum.Enum):
    COARSE_FINE = "coarse_fine"
    FINE_COARSE = "fine_coarse"


@dataclass
class SpectrogramConfig:
    sample_rate: int = 16000
    n_fft: int = 1024
    hop: int = 323
    n_mels: int = 64
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if not 0 < self.hop < self.n_fft:
            raise ConfigError(f"hop must be in (0, n_fft): hop={self.hop}, n_fft={self.n_fft}")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ConfigError(f"need 0 <= fmin < fmax <= sr/2, got {self.fmin}, {self.fmax}")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")


@dataclass
class MgaConfig:
    d: int = 144
    heads: int = 4
    context: int = 3
    gru_hidden: int = 512
    order: Order = Order.COARSE_FINE
    global_stage: bool = True
    local_stage: bool = True
    frame_stage: bool = True
    max_len: int = 125

    def __post_init__(self):
        self.order = Order(self.order)
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.context < 1 or self.context % 2 == 0:
            raise ConfigError(f"context width must be odd and >= 1, got {self.context}")
        if not (self.global_stage or self.local_stage or self.frame_stage):
            raise ConfigError("at least one of the global/local/frame stages must be enabled")


@dataclass
class ModelConfig:
    n_classes: int = 10
    n_mga: int = 4
    channels: tuple[int, ...] = (16, 32, 64, 128, 144, 144)
    pools: tuple[tuple[int, int], ...] = ((2, 2), (2, 2), (1, 2), (1, 2), (1, 2), (1, 2))
    mga: MgaConfig = field(default_factory=MgaConfig)
    variant: ConvBlockVariant = ConvBlockVariant.RH_CONV
    spatial_shift: bool = True
    dropout: float = 0.1
    n_frames: int = 496
    n_mels: int = 64
    preset: str = "full"

    def __post_init__(self):
        self.variant = ConvBlockVariant(self.variant)
        self.channels = tuple(int(c) for c in self.channels)
        self.pools = tuple(tuple(int(v) for v in p) for p in self.pools)
        if len(self.channels) != len(self.pools):
            raise ConfigError("channels and pools must list one entry per conv block")
        t, f = self.output_extent
        if self.channels[-1] * f != self.mga.d:
            raise ConfigError(
                f"encoder output {self.channels[-1]} channels x {f} bins does not match attention width d={self.mga.d}"
            )
        if t + 1 > self.mga.max_len:
            raise ConfigError(f"sequence length {t + 1} exceeds max_len={self.mga.max_len}")
        if self.spatial_shift and (self.channels[-1] % 4):
            raise ConfigError("spatial shift needs the last block's channels divisible by 4")

    @property
    def output_extent(self) -> tuple[int, int]:
        t, f = self.n_frames, self.n_mels
        for pt, pf in self.pools:
            if t % pt or f % pf:
                raise ConfigError(f"pooling schedule {self.pools} does not divide input {self.n_frames}x{self.n_mels}")
            t, f = t // pt, f // pf
        return t, f

    @classmethod
    def full(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        mga_over = overrides.pop("mga", {})
        if isinstance(mga_over, MgaConfig):
            mga_over = dataclasses.asdict(mga_over)
        mga = MgaConfig(**{"d": 16, "heads": 2, "gru_hidden": 16, **mga_over})
        base = dict(
            n_mga=2,
            # four frequency bands survive the encoder: 4 channels x 4 bands = d
            channels=(4, 4),
            pools=((2, 4), (2, 4)),
            mga=mga,
            preset="tiny",
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class TrainingConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 1000
    batch_strong: int = 4
    batch_weak: int = 4
    batch_unlabeled: int = 8
    epochs: int = 200
    ema_alpha: float = 0.999
    consistency_max_weight: float = 2.0
    ramp_epochs: int = 30
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ema_alpha < 1.0:
            raise ConfigError("ema_alpha must lie in [0, 1)")
        if self.consistency_max_weight < 0 or self.noise_sigma < 0 or self.lr <= 0:
            raise ConfigError("weights, noise and learning rate must be non-negative")


@dataclass
class EvalConfig:
    threshold: float = 0.5
    median_window: int = 7
    onset_collar: float = 0.2
    offset_collar: float = 0.2
    offset_collar_rate: float = 0.2
    frame_hop: float = 10.0 / 124

    def __post_init__(self):
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ConfigError("median_window must be odd")
        if self.onset_collar <= 0 or self.offset_collar <= 0:
            raise ConfigError("collars must be positive")


@dataclass
class ToyConfig:
    classes: tuple[str, ...] = ("tone_500", "tone_2000", "noise_5k")
    n_strong: int = 30
    n_weak: int = 20
    n_unlabeled: int = 50
    n_holdout: int = 15
    min_events: int = 1
    max_events: int = 3
    min_duration: float = 0.8
    max_duration: float = 3.0
    clip_seconds: float = 10.0
    noise_level: float = 0.005


@dataclass
class RunConfig:
    spectrogram: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)
    paths: dict[str, str] = field(default_factory=dict)

    def lines(self) -> list[str]:
        """Fully resolved ``section.key = value`` lines."""
        out = []
        for section in ("spectrogram", "model", "training", "eval", "toy"):
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                value = getattr(obj, f.name)
                if isinstance(value, MgaConfig):
                    for g in dataclasses.fields(value):
                        out.append(f"mga.{g.name} = {_fmt(getattr(value, g.name))}")
                    continue
                out.append(f"{section}.{f.name} = {_fmt(value)}")
        out += [f"paths.{k} = {v}" for k, v in sorted(self.paths.items())]
        return out


PATH_KEYS = {"corpus", "features", "checkpoint", "predictions", "references", "out"}


def _fmt(value: Any) -> str:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join("x".join(str(v) for v in p) for p in value)
        return ",".join(str(v) for v in value)
    return str(value)


def _coerce(raw: str, current: Any, key: str) -> Any:
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() not in {"true", "false", "1", "0", "yes", "no"}:
                raise ValueError(raw)
            return raw.lower() in {"true", "1", "yes"}
        if isinstance(current, enum.Enum):
            return type(current)(raw.lower())
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            if current and isinstance(current[0], tuple):
                return tuple(tuple(int(v) for v in p.split("x")) for p in raw.split(","))
            if current and isinstance(current[0], int):
                return tuple(int(v) for v in raw.split(","))
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_overrides(lines: list[str], source: str = "<config>") -> dict[str, dict[str, str]]:
    """Parse ``section.key = value`` lines; ``#`` starts a comment."""
    out: dict[str, dict[str, str]] = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line or "." not in line.split("=", 1)[0]:
            raise ConfigError(f"{source}:{n}: expected 'section.key = value', got {line!r}")
        lhs, rhs = line.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        out.setdefault(section, {})[key.strip()] = rhs.strip()
    return out


def build_run_config(overrides: dict[str, dict[str, str]], preset: str = "full") -> RunConfig:
    """Apply parsed overrides on top of preset defaults; unknown keys are rejected."""
    known = {"spectrogram", "model", "mga", "training", "eval", "toy", "paths"}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    preset = overrides.get("model", {}).pop("preset", preset) if "model" in overrides else preset
    if preset not in {"full", "tiny"}:
        raise ConfigError(f"preset must be 'full' or 'tiny', got {preset!r}")

    def apply(obj, section: str) -> dict[str, Any]:
        names = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
        values = {}
        for key, raw in overrides.get(section, {}).items():
            if key not in names or isinstance(names[key], MgaConfig):
                raise ConfigError(f"unknown config key {section}.{key}")
            values[key] = _coerce(raw, names[key], f"{section}.{key}")
        return values

    base_model = ModelConfig.tiny() if preset == "tiny" else ModelConfig.full()
    mga = dataclasses.replace(base_model.mga, **apply(base_model.mga, "mga"))
    model_values = apply(base_model, "model")
    model_values.pop("preset", None)
    model = (ModelConfig.tiny if preset == "tiny" else ModelConfig.full)(mga=mga, **model_values)
    spectrogram = SpectrogramConfig(**apply(SpectrogramConfig(), "spectrogram"))
    train = TrainingConfig(**apply(TrainingConfig(), "training"))
    ev = EvalConfig(**apply(EvalConfig(), "eval"))
    toy = ToyConfig(**apply(ToyConfig(), "toy"))
    paths = dict(overrides.get("paths", {}))
    bad = set(paths) - PATH_KEYS
    if bad:
        raise ConfigError(f"unknown config key(s) paths.{sorted(bad)}")
    return RunConfig(spectrogram=spectrogram, model=model, training=train, eval=ev, toy=toy, paths=paths)


def load_run_config(path: str | Path | None, preset: str = "full", extra: list[str] | None = None) -> RunConfig:
    lines = Path(path).read_text().splitlines() if path else []
    overrides = parse_overrides(lines, str(path or "<defaults>"))
    for section, values in parse_overrides(extra or [], "<flags>").items():
        overrides.setdefault(section, {}).update(values)
    return build_run_config(overrides, preset)
