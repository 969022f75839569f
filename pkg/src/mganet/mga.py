"""Multi-grained temporal context modeling: global RPE attention, local dense synthesizer attention, Bi-GRU.

All stages map ``[N, T, d] -> [N, T, d]`` and are pre-norm with a residual.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .config import ConfigError, MgaConfig, Order
from .nn import LayerNorm, Linear, Module, uniform_fan_in
from .tensor import Parameter, Tensor, add, concat, getitem, matmul, mul, relu, reshape, softmax, take_along_last, transpose


def _batch(x: Tensor) -> tuple[Tensor, bool]:
    return (reshape(x, (1,) + x.shape), True) if x.ndim == 2 else (x, False)


def _unbatch(x: Tensor, squeeze: bool) -> Tensor:
    return reshape(x, x.shape[1:]) if squeeze else x


class RelativeSelfAttention(Module):
    """Multi-head self-attention with learned relative-position embeddings and global biases.

    logit[i, j] = ((q_i + u) . k_j + (q_i + v) . r_{i-j}) / sqrt(d_head)
    """

    def __init__(self, rng: np.random.Generator, d: int, heads: int, max_len: int):
        if d % heads:
            raise ConfigError(f"d={d} is not divisible by heads={heads}")
        self.d, self.heads, self.max_len = d, heads, max_len
        self.ln = LayerNorm(d)
        self.wq = uniform_fan_in(rng, (d, d), d)
        self.wk = uniform_fan_in(rng, (d, d), d)
        self.wv = uniform_fan_in(rng, (d, d), d)
        self.wo = uniform_fan_in(rng, (d, d), d)
        self.rel = Parameter(0.02 * rng.standard_normal((2 * max_len - 1, d)))
        self.u = Parameter(np.zeros((heads, d // heads)))
        self.v = Parameter(np.zeros((heads, d // heads)))

    def attention(self, h: Tensor) -> tuple[Tensor, Tensor]:
        """Weights ``[N, H, T, T]`` and per-head values ``[N, H, T, dh]`` for normalized input ``h [N, T, d]``."""
        n, t, d = h.shape
        if t > self.max_len:
            raise ConfigError(f"sequence length {t} exceeds the relative-position table ({self.max_len})")
        dh = d // self.heads
        heads = lambda z: transpose(reshape(z, (n, t, self.heads, dh)), (0, 2, 1, 3))  # noqa: E731
        q, k, v = heads(matmul(h, self.wq)), heads(matmul(h, self.wk)), heads(matmul(h, self.wv))
        u = reshape(self.u, (self.heads, 1, dh))
        pos_bias = reshape(self.v, (self.heads, 1, dh))
        content = matmul(add(q, u), transpose(k, (0, 1, 3, 2)))
        # rows of the table for offsets -(t-1) .. t-1, laid out as [H, dh, 2t-1]
        rel = self.rel[self.max_len - t : self.max_len + t - 1]
        rel = transpose(reshape(rel, (2 * t - 1, self.heads, dh)), (1, 2, 0))
        by_offset = matmul(add(q, pos_bias), rel)  # [N, H, T, 2T-1], column m <-> offset m - (t-1)
        offsets = np.arange(t)[:, None] - np.arange(t)[None, :] + t - 1
        position = take_along_last(by_offset, offsets)
        logits = mul(add(content, position), 1.0 / np.sqrt(dh))
        return softmax(logits, axis=-1), v

    def forward(self, x: Tensor) -> Tensor:
        x, squeeze = _batch(x)
        n, t, d = x.shape
        weights, v = self.attention(self.ln(x))
        ctx = reshape(transpose(matmul(weights, v), (0, 2, 1, 3)), (n, t, d))
        return _unbatch(add(matmul(ctx, self.wo), x), squeeze)


class LDSA(Module):
    """Local dense synthesizer attention over a window of ``context`` frames centred on each frame."""

    def __init__(self, rng: np.random.Generator, d: int, context: int):
        if context < 1 or context % 2 == 0:
            raise ConfigError(f"context width must be odd, got {context}")
        self.context = context
        self.W1 = uniform_fan_in(rng, (d, d), d)
        self.W2 = uniform_fan_in(rng, (d, context), d)
        self.W3 = uniform_fan_in(rng, (d, d), d)
        self.Wo = uniform_fan_in(rng, (d, d), d)

    def weights(self, x: Tensor) -> Tensor:
        """Row-stochastic window weights ``[N, T, context]``."""
        return softmax(matmul(relu(matmul(x, self.W1)), self.W2), axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        x, squeeze = _batch(x)
        y = F.local_window_sum(self.weights(x), matmul(x, self.W3))
        return _unbatch(matmul(y, self.Wo), squeeze)


class LocalContext(Module):
    def __init__(self, rng: np.random.Generator, d: int, context: int):
        self.ln = LayerNorm(d)
        self.ldsa = LDSA(rng, d, context)

    def forward(self, x: Tensor) -> Tensor:
        return add(self.ldsa(self.ln(x)), x)


class GRUWeights(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, hidden: int):
        self.w_in = uniform_fan_in(rng, (d_in, 3 * hidden), hidden)
        self.w_hid = uniform_fan_in(rng, (hidden, 3 * hidden), hidden)
        self.b_in = Parameter(np.zeros(3 * hidden))
        self.b_hid = Parameter(np.zeros(3 * hidden))

    def forward(self, x: Tensor) -> Tensor:
        return F.gru(x, self.w_in, self.w_hid, self.b_in, self.b_hid)


def _reverse_time(x: Tensor) -> Tensor:
    return getitem(x, (slice(None), slice(None, None, -1)))


class FrameContext(Module):
    """``Linear(ReLU(proj(BiGRU(LN(x))) + x))``; the 2*hidden GRU output is projected to d before the residual."""

    def __init__(self, rng: np.random.Generator, d: int, hidden: int):
        self.ln = LayerNorm(d)
        self.fwd = GRUWeights(rng, d, hidden)
        self.bwd = GRUWeights(rng, d, hidden)
        self.proj = Linear(rng, 2 * hidden, d)
        self.out = Linear(rng, d, d)

    def bigru(self, h: Tensor) -> Tensor:
        """Concatenated forward/backward hidden states ``[N, T, 2*hidden]``."""
        return concat([self.fwd(h), _reverse_time(self.bwd(_reverse_time(h)))], axis=-1)

    def forward(self, x: Tensor, skip_first: bool = False) -> Tensor:
        x, squeeze = _batch(x)
        token = None
        if skip_first:
            token, x = x[:, :1], x[:, 1:]
        y = self.out(relu(add(self.proj(self.bigru(self.ln(x))), x)))
        if token is not None:
            y = concat([token, y], axis=1)
        return _unbatch(y, squeeze)


class MGAModule(Module):
    def __init__(self, rng: np.random.Generator, config: MgaConfig):
        self.config = config
        self.global_ctx = RelativeSelfAttention(rng, config.d, config.heads, config.max_len) if config.global_stage else None
        self.local_ctx = LocalContext(rng, config.d, config.context) if config.local_stage else None
        self.frame_ctx = FrameContext(rng, config.d, config.gru_hidden) if config.frame_stage else None

    def stages(self):
        stages = [("global", self.global_ctx), ("local", self.local_ctx), ("frame", self.frame_ctx)]
        if self.config.order is Order.FINE_COARSE:
            stages.reverse()
        return [(name, s) for name, s in stages if s is not None]

    def forward(self, x: Tensor, has_token: bool = False) -> Tensor:
        for name, stage in self.stages():
            x = stage(x, skip_first=has_token) if name == "frame" else stage(x)
        return x
