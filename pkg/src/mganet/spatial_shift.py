"""Spatial-shift perturbation module: expand, shift two of three branches, reweigh, recombine."""

from __future__ import annotations

import numpy as np

from .config import ConfigError
from .nn import Conv2d, Linear, Module
from .tensor import Tensor, add, concat, mean, mul, reshape, softmax, split, take


def _shift_index(n: int, direction: int) -> np.ndarray:
    """Source positions for a one-step shift; the line that has no source keeps its own value."""
    idx = np.arange(n)
    if n > 1 and direction > 0:
        idx[1:] = np.arange(n - 1)
    elif n > 1 and direction < 0:
        idx[:-1] = np.arange(1, n)
    return idx


# (axis, direction) per channel quarter; axis -2 is time, -1 is frequency
SHIFT1 = ((-2, +1), (-2, -1), (-1, +1), (-1, -1))
SHIFT2 = ((-1, +1), (-1, -1), (-2, +1), (-2, -1))


def _grouped_shift(x: Tensor, plan) -> Tensor:
    c = x.shape[-3]
    if c % 4:
        raise ConfigError(f"spatial shift needs channels divisible by 4, got {c}")
    lead = (slice(None),) * (x.ndim - 3)
    q = c // 4
    parts = []
    for g, (axis, direction) in enumerate(plan):
        part = x[lead + (slice(g * q, (g + 1) * q),)]
        parts.append(take(part, _shift_index(x.shape[axis], direction), axis=x.ndim + axis))
    return concat(parts, axis=x.ndim - 3)


def shift1(x: Tensor) -> Tensor:
    """Quarters shift +time, -time, +frequency, -frequency by one step."""
    return _grouped_shift(x, SHIFT1)


def shift2(x: Tensor) -> Tensor:
    """Axis-swapped complement of ``shift1``: +frequency, -frequency, +time, -time."""
    return _grouped_shift(x, SHIFT2)


class SpatialShift(Module):
    def __init__(self, rng: np.random.Generator, channels: int):
        if channels % 4:
            raise ConfigError(f"spatial shift needs channels divisible by 4, got {channels}")
        self.channels = channels
        self.expand = Conv2d(rng, channels, 3 * channels, (1, 1))
        self.weigh = Linear(rng, 3 * channels, 3)

    def branch_weights(self, x: Tensor) -> tuple[list[Tensor], Tensor]:
        """Returns the three branches and their softmax weights ``[N, 3]``."""
        xb = x if x.ndim == 4 else reshape(x, (1,) + x.shape)
        x1, x2, x3 = split(self.expand(xb), 3, axis=1)
        branches = [shift1(x1), shift2(x2), x3]
        pooled = concat([mean(s, axis=(2, 3)) for s in branches], axis=1)  # [N, 3c]
        return branches, softmax(self.weigh(pooled), axis=-1)

    def forward(self, x: Tensor) -> Tensor:
        branches, a = self.branch_weights(x)
        n = a.shape[0]
        out = None
        for i, s in enumerate(branches):
            w = reshape(a[:, i], (n, 1, 1, 1))
            term = mul(s, w)
            out = term if out is None else add(out, term)
        return out if x.ndim == 4 else reshape(out, x.shape[:0] + out.shape[1:])
