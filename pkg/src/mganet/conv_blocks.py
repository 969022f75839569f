"""The four convolutional feature-extraction blocks and the pooled encoder stack."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .config import ConvBlockVariant, ModelConfig
from .nn import BatchNorm2d, Conv2d, Module
from .spatial_shift import SpatialShift
from .tensor import DimensionError, Tensor, add, reshape, transpose

SQUARE, WIDE, TALL = (3, 3), (1, 3), (3, 1)  # kernels in (time, frequency)


class ConvBlock(Module):
    """One feature-extraction block; every variant preserves T x F.

    V:  conv3x3-BN-GELU, conv3x3-BN-GELU
    RV: V + residual
    RA: two stages of (3x3 + 1x3 + 3x1 summed)-BN-GELU, + residual
    RH: (1x3 + 3x1 summed)-BN-GELU, conv3x3-BN-GELU, + residual

    The residual is the identity when widths match, otherwise a 1x1 conv + BN.
    """

    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, variant: ConvBlockVariant):
        self.variant = ConvBlockVariant(variant)
        self.c_in, self.c_out = c_in, c_out
        v = self.variant
        if v in (ConvBlockVariant.V_CONV, ConvBlockVariant.RV_CONV):
            self.stage_a = [Conv2d(rng, c_in, c_out, SQUARE)]
            self.stage_b = [Conv2d(rng, c_out, c_out, SQUARE)]
        elif v is ConvBlockVariant.RA_CONV:
            self.stage_a = [Conv2d(rng, c_in, c_out, k) for k in (SQUARE, WIDE, TALL)]
            self.stage_b = [Conv2d(rng, c_out, c_out, k) for k in (SQUARE, WIDE, TALL)]
        else:
            self.stage_a = [Conv2d(rng, c_in, c_out, k) for k in (WIDE, TALL)]
            self.stage_b = [Conv2d(rng, c_out, c_out, SQUARE)]
        self.bn_a = BatchNorm2d(c_out)
        self.bn_b = BatchNorm2d(c_out)
        self.proj = None
        self.proj_bn = None
        if v is not ConvBlockVariant.V_CONV and c_in != c_out:
            self.proj = Conv2d(rng, c_in, c_out, (1, 1))
            self.proj_bn = BatchNorm2d(c_out)

    @property
    def residual(self) -> bool:
        return self.variant is not ConvBlockVariant.V_CONV

    def _stage(self, convs: list[Conv2d], bn: BatchNorm2d, x: Tensor, train: bool, update_stats: bool) -> Tensor:
        y = convs[0](x)
        for conv in convs[1:]:
            y = add(y, conv(x))
        return F.gelu(bn(y, train, update_stats))

    def forward(self, x: Tensor, train: bool = False, update_stats: bool = True) -> Tensor:
        if x.shape[-3] != self.c_in:
            raise DimensionError(f"block expects {self.c_in} input channels, got shape {x.shape}")
        y = self._stage(self.stage_a, self.bn_a, x, train, update_stats)
        y = self._stage(self.stage_b, self.bn_b, y, train, update_stats)
        if not self.residual:
            return y
        skip = x if self.proj is None else self.proj_bn(self.proj(x), train, update_stats)
        return add(y, skip)


def block_param_count(c_in: int, c_out: int, variant: ConvBlockVariant) -> int:
    """Closed-form number of learnable scalars in one block."""

    def conv(ci, co, taps):
        return co * ci * taps + co

    bn = 2 * c_out
    v = ConvBlockVariant(variant)
    if v in (ConvBlockVariant.V_CONV, ConvBlockVariant.RV_CONV):
        total = conv(c_in, c_out, 9) + conv(c_out, c_out, 9) + 2 * bn
    elif v is ConvBlockVariant.RA_CONV:
        total = sum(conv(c_in, c_out, k) for k in (9, 3, 3)) + sum(conv(c_out, c_out, k) for k in (9, 3, 3)) + 2 * bn
    else:
        total = conv(c_in, c_out, 3) * 2 + conv(c_out, c_out, 9) + 2 * bn
    if v is not ConvBlockVariant.V_CONV and c_in != c_out:
        total += conv(c_in, c_out, 1) + bn
    return total


class Encoder(Module):
    """Blocks, each followed by average pooling and dropout; optional spatial shift after the last."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig, in_channels: int = 1):
        widths = (in_channels,) + tuple(config.channels)
        self.blocks = [ConvBlock(rng, widths[i], widths[i + 1], config.variant) for i in range(len(config.channels))]
        self.pools = config.pools
        self.dropout = config.dropout
        self.shift = SpatialShift(rng, config.channels[-1]) if config.spatial_shift else None

    def forward(
        self, x: Tensor, train: bool = False, rng: np.random.Generator | None = None, update_stats: bool = True
    ) -> Tensor:
        for block, pool in zip(self.blocks, self.pools):
            x = block(x, train, update_stats)
            x = F.avg_pool2d(x, pool)
            x = F.dropout(x, self.dropout, rng, train)
        if self.shift is not None:
            x = self.shift(x)
        return x


def to_sequence(x: Tensor) -> Tensor:
    """``[N, C, T, F] -> [N, T, C*F]`` (a squeeze when F == 1)."""
    n, c, t, f = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (n, t, c * f))
