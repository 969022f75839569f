"""Slow, loop-based reference implementations used to pin the vectorized kernels.

Nothing here touches the autograd engine; every function works on plain arrays.
"""

from __future__ import annotations

import numpy as np


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, padding: tuple[int, int]) -> np.ndarray:
    """Cross-correlation of ``x [C_in, T, F]`` with ``w [C_out, C_in, kh, kw]`` and zero padding."""
    c_in, t, f = x.shape
    c_out, _, kh, kw = w.shape
    ph, pw = padding
    out = np.zeros((c_out, t + 2 * ph - kh + 1, f + 2 * pw - kw + 1))
    for o in range(c_out):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                acc = 0.0 if b is None else float(b[o])
                for c in range(c_in):
                    for di in range(kh):
                        for dj in range(kw):
                            ti, fj = i + di - ph, j + dj - pw
                            if 0 <= ti < t and 0 <= fj < f:
                                acc += w[o, c, di, dj] * x[c, ti, fj]
                out[o, i, j] = acc
    return out


def _shift_channels_last(x: np.ndarray, plan) -> np.ndarray:
    """Apply slice assignments ``dst <- src`` to a ``[T, F, C]`` array, reading from an untouched snapshot."""
    t, f, c = x.shape
    q = c // 4
    src = x.copy()
    out = x.copy()
    for g, (axis, direction) in enumerate(plan):
        ch = slice(g * q, (g + 1) * q)
        for ti in range(t):
            for fi in range(f):
                st, sf = ti, fi
                if axis == "t":
                    st = ti - direction
                else:
                    sf = fi - direction
                if 0 <= st < t and 0 <= sf < f:
                    out[ti, fi, ch] = src[st, sf, ch]
    return out


# each entry reads "destination index i takes source index i - direction" along the named axis
_PLAN1 = (("t", +1), ("t", -1), ("f", +1), ("f", -1))
_PLAN2 = (("f", +1), ("f", -1), ("t", +1), ("t", -1))


def shift1(x: np.ndarray) -> np.ndarray:
    """Reference for ``[C, T, F]`` (or batched) input, evaluated element by element in channels-last layout."""
    return _apply_plan(x, _PLAN1)


def shift2(x: np.ndarray) -> np.ndarray:
    return _apply_plan(x, _PLAN2)


def _apply_plan(x: np.ndarray, plan) -> np.ndarray:
    if x.ndim == 4:
        return np.stack([_apply_plan(xi, plan) for xi in x])
    return np.transpose(_shift_channels_last(np.transpose(x, (1, 2, 0)), plan), (2, 0, 1))


def ldsa(x: np.ndarray, w1: np.ndarray, w2: np.ndarray, w3: np.ndarray, wo: np.ndarray) -> np.ndarray:
    """Per-frame loop over ``x [T, d]``; window taps outside the sequence contribute nothing."""
    t, d = x.shape
    c = w2.shape[1]
    out = np.zeros((t, wo.shape[1]))
    v = np.array([[sum(x[s, k] * w3[k, j] for k in range(d)) for j in range(w3.shape[1])] for s in range(t)])
    for ti in range(t):
        hidden = np.maximum(x[ti] @ w1, 0.0)
        logits = hidden @ w2
        e = np.exp(logits - logits.max())
        a = e / e.sum()
        y = np.zeros(w3.shape[1])
        for j in range(c):
            s = ti + j - c // 2
            if 0 <= s < t:
                y += a[j] * v[s]
        out[ti] = y @ wo
    return out


def ema(teacher: np.ndarray, student: np.ndarray, alpha: float) -> np.ndarray:
    return alpha * teacher + (1.0 - alpha) * student
