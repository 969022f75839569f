"""Full network: encoder -> sequence with class token -> MGA modules -> strong and weak sigmoid heads."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .conv_blocks import Encoder, block_param_count, to_sequence
from .mga import MGAModule
from .nn import Linear, Module
from .tensor import DimensionError, Parameter, Tensor, add, as_tensor, concat, reshape, sigmoid

CHECKPOINT_MAGIC = b"MGAC"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is malformed or does not fit the model it is loaded into."""


@dataclass
class ModelOutput:
    strong: Tensor  # [N, T', K] frame probabilities
    weak: Tensor  # [N, K] clip probabilities


class MGANet(Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        d = config.mga.d
        self.encoder = Encoder(rng, config)
        self.token = Parameter(0.02 * rng.standard_normal(d))
        self.mga = [MGAModule(rng, config.mga) for _ in range(config.n_mga)]
        self.strong_head = Linear(rng, d, config.n_classes)
        self.weak_head = Linear(rng, d, config.n_classes)
        self.assign_names()

    def embed(
        self, features: Tensor, train: bool = False, rng: np.random.Generator | None = None, update_stats: bool = True
    ) -> Tensor:
        """Encoder output as a token-prefixed sequence ``[N, T'+1, d]``."""
        x = as_tensor(features)
        if x.shape[-2:] != (self.config.n_frames, self.config.n_mels):
            raise DimensionError(
                f"features must end in ({self.config.n_frames}, {self.config.n_mels}), got {x.shape}"
            )
        if x.ndim == 2:
            x = reshape(x, (1,) + x.shape)
        x = reshape(x, (x.shape[0], 1) + x.shape[1:])
        seq = to_sequence(self.encoder(x, train, rng, update_stats))
        return concat([add(np.zeros((seq.shape[0], 1, seq.shape[2])), self.token), seq], axis=1)

    def forward(
        self,
        features: Tensor | np.ndarray,
        train: bool = False,
        rng: np.random.Generator | None = None,
        update_stats: bool = True,
    ) -> ModelOutput:
        """``features [N?, frames, mels]``; a 2-d input gives outputs without the batch axis."""
        single = np.ndim(features.data if isinstance(features, Tensor) else features) == 2
        x = self.embed(features, train, rng, update_stats)
        for module in self.mga:
            x = module(x, has_token=True)
        strong = sigmoid(self.strong_head(x[:, 1:]))
        weak = sigmoid(self.weak_head(x[:, 0]))
        if single:
            strong, weak = reshape(strong, strong.shape[1:]), reshape(weak, weak.shape[1:])
        return ModelOutput(strong, weak)


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form learnable-scalar count for a configuration."""
    d, k, m = config.mga.d, config.n_classes, config.mga
    widths = (1,) + tuple(config.channels)
    total = sum(block_param_count(widths[i], widths[i + 1], config.variant) for i in range(len(config.channels)))
    if config.spatial_shift:
        c = config.channels[-1]
        total += (3 * c * c + 3 * c) + (3 * c * 3 + 3)
    total += d  # class token
    per = 0
    dh = d // m.heads
    if m.global_stage:
        per += 2 * d + 4 * d * d + (2 * m.max_len - 1) * d + 2 * m.heads * dh
    if m.local_stage:
        per += 2 * d + 3 * d * d + d * m.context
    if m.frame_stage:
        h = m.gru_hidden
        per += 2 * d + 2 * (3 * h * d + 3 * h * h + 6 * h) + (2 * h * d + d) + (d * d + d)
    total += config.n_mga * per
    total += 2 * (d * k + k)
    return total


# -- checkpoints ---------------------------------------------------------
def save_state(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    """Binary state file: magic, version, then (name, shape, float64 payload) records."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION))
        for name, arr in entries.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_state(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (missing MGAC magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos, out = 8, {}
    try:
        while pos < len(blob):
            (nlen,) = struct.unpack_from("<I", blob, pos)
            name = blob[pos + 4 : pos + 4 + nlen].decode("utf-8")
            pos += 4 + nlen
            (rank,) = struct.unpack_from("<I", blob, pos)
            shape = struct.unpack_from(f"<{rank}I", blob, pos + 4)
            pos += 4 + 4 * rank
            count = int(np.prod(shape)) if rank else 1
            out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += 8 * count
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return out


def save_checkpoint(path: str | Path, model: Module) -> None:
    save_state(path, {name: t.data for name, t in model.named_state()})


def load_checkpoint(path: str | Path, model: Module) -> None:
    """Load into ``model`` after validating that names and shapes match exactly."""
    state = load_state(path)
    own = dict(model.named_state())
    missing, extra = set(own) - set(state), set(state) - set(own)
    if missing or extra:
        raise CheckpointError(
            f"{path}: checkpoint does not match the model (missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]})"
        )
    for name, t in own.items():
        if state[name].shape != t.shape:
            raise CheckpointError(f"{path}: {name} has shape {state[name].shape}, model expects {t.shape}")
    for name, t in own.items():
        t.data[...] = state[name]
