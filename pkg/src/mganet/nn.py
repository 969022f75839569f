"""Parameter containers and the small layers shared by the model blocks."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor


class Buffer(Tensor):
    """Untracked model state (e.g. running statistics) that is checkpointed and EMA-averaged."""

    __slots__ = ()


class Module:
    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Module, Tensor)):
                        yield f"{key}.{i}", item
            else:
                yield key, value

    def named_state(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        """Parameters and buffers, depth first, in attribute definition order."""
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and isinstance(value, (Parameter, Buffer)):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_state(name + ".")

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for name, t in self.named_state():
            if isinstance(t, Parameter):
                yield name, t

    def named_buffers(self) -> Iterator[tuple[str, Buffer]]:
        for name, t in self.named_state():
            if isinstance(t, Buffer):
                yield name, t

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Parameter:
    bound = np.sqrt(3.0 / fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape))


def zeros(*shape: int) -> Parameter:
    return Parameter(np.zeros(shape))


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.w = uniform_fan_in(rng, (d_in, d_out), d_in)
        self.b = zeros(d_out) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gamma = Parameter(np.ones(d))
        self.beta = zeros(d)

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta)


class Conv2d(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, kernel: tuple[int, int]):
        kh, kw = kernel
        self.w = uniform_fan_in(rng, (c_out, c_in, kh, kw), c_in * kh * kw)
        self.b = zeros(c_out)
        self.padding = (kh // 2, kw // 2)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.w, self.b, self.padding)


class BatchNorm2d(Module):
    def __init__(self, c: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(c))
        self.beta = zeros(c)
        self.running_mean = Buffer(np.zeros(c))
        self.running_var = Buffer(np.ones(c))
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor, train: bool, update_stats: bool = True) -> Tensor:
        return F.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean.data,
            self.running_var.data,
            train,
            self.momentum,
            self.eps,
            update_stats,
        )
