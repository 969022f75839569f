"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def numeric_grad(f: Callable[[], Tensor], x: Tensor, h: float = 1e-4) -> np.ndarray:
    """(f(x+h) - f(x-h)) / 2h for every coordinate of ``x``, perturbing in place."""
    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)
    out = np.empty_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            out[i] = (fp - fm) / (2 * h)
    return out.reshape(x.shape)


def grad_check(
    f: Callable[..., Tensor], x: Tensor | Sequence[Tensor], h: float = 1e-4, floor: float = 1e-6
) -> float:
    """Max relative error between backward() and central differences.

    ``f`` is called with the tensor(s) in ``x`` as positional arguments and
    must return a scalar. The error per coordinate is
    ``|analytic - numeric| / max(floor, |analytic| + |numeric|)``. The floor
    keeps coordinates whose true gradient is exactly zero (a bias feeding
    batch norm, say) from turning ~1e-11 difference round-off into a large
    relative error.
    """
    xs = [x] if isinstance(x, Tensor) else list(x)
    saved = [t.requires_grad for t in xs]
    for t in xs:
        t.requires_grad = True
        t.grad = None
    try:
        call = lambda: f(*xs)  # noqa: E731
        backward(call())
        worst = 0.0
        for t in xs:
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            numeric = numeric_grad(call, t, h)
            denom = np.maximum(floor, np.abs(analytic) + np.abs(numeric))
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom, initial=0.0)))
        return worst
    finally:
        for t, s in zip(xs, saved):
            t.requires_grad = s
            t.grad = None


def weighted_sum(out: Tensor, seed: int = 0) -> Tensor:
    """Project a tensor to a scalar with fixed random weights, so no gradient vanishes by symmetry."""
    w = np.random.default_rng(seed).standard_normal(out.shape)
    return (out * w).sum()
