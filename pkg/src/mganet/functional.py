"""Fused differentiable kernels: convolution, pooling, normalization, GRU, windowed sums.

Each kernel accepts an optional leading batch axis; ``[C, T, F]`` inputs are
treated as a batch of one and returned without the batch axis.
"""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError, Tensor, _record, add, as_tensor, clip, gelu, log, matmul, mean, relu, sigmoid, softmax  # noqa: F401


def _batched(x: Tensor, ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == ndim:
        return x.data[None], True
    if x.ndim == ndim + 1:
        return x.data, False
    raise DimensionError(f"expected a {ndim}-d or batched {ndim + 1}-d tensor, got shape {x.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: tuple[int, int] = (0, 0)) -> Tensor:
    """Stride-1 cross-correlation of ``x [N?,C_in,T,F]`` with ``w [C_out,C_in,kh,kw]``.

    Works on the zero-padded map flattened row-major: tap (i, j) is a shift of
    ``i * F_pad + j`` in that flat layout, so each clip is one GEMM of the
    weights against the stacked shifted rows. Columns that wrap past a row end
    are computed and then discarded.
    """
    xb, squeeze = _batched(x, 3)
    c_out, c_in, kh, kw = w.shape
    if xb.shape[1] != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape}, weight {w.shape}")
    ph, pw = padding
    n, _, t, f = xb.shape
    tp, fp = t + 2 * ph, f + 2 * pw
    if kh > tp or kw > fp:
        raise DimensionError(f"conv2d kernel {kh}x{kw} larger than padded input {tp}x{fp}")
    to, fo = tp - kh + 1, fp - kw + 1
    span = (to - 1) * fp + fo
    offsets = [i * fp + j for i in range(kh) for j in range(kw)]
    xf = np.pad(xb, ((0, 0), (0, 0), (ph, ph), (pw, pw))).reshape(n, c_in, tp * fp)
    w2 = w.data.transpose(0, 2, 3, 1).reshape(c_out, kh * kw * c_in)

    def cols(k):
        return np.concatenate([xf[k, :, o : o + span] for o in offsets], axis=0)

    flat = np.zeros((n, c_out, to * fp))
    for k in range(n):
        flat[k, :, :span] = w2 @ cols(k)
    out = flat.reshape(n, c_out, to, fp)[..., :fo]
    if b is not None:
        out = out + b.data[None, :, None, None]
    else:
        out = np.ascontiguousarray(out)

    def bw(g):
        gb = g[None] if squeeze else g
        gflat = np.zeros((n, c_out, to, fp))
        gflat[..., :fo] = gb
        gflat = gflat.reshape(n, c_out, to * fp)[..., :span]
        gw2 = np.zeros_like(w2)
        gxf = np.zeros_like(xf)
        for k in range(n):
            gw2 += gflat[k] @ cols(k).T
            gcols = w2.T @ gflat[k]
            for tap, o in enumerate(offsets):
                gxf[k, :, o : o + span] += gcols[tap * c_in : (tap + 1) * c_in]
        gx = gxf.reshape(n, c_in, tp, fp)[:, :, ph : ph + t, pw : pw + f]
        gw = gw2.reshape(c_out, kh, kw, c_in).transpose(0, 3, 1, 2)
        grads = [gx[0] if squeeze else np.ascontiguousarray(gx), np.ascontiguousarray(gw)]
        if b is not None:
            grads.append(gb.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _record(out[0] if squeeze else out, parents, bw, "conv2d")


def avg_pool2d(x: Tensor, size: tuple[int, int]) -> Tensor:
    xb, squeeze = _batched(x, 3)
    pt, pf = size
    n, c, t, f = xb.shape
    if t % pt or f % pf:
        raise DimensionError(f"avg_pool2d: extents {t}x{f} not divisible by window {pt}x{pf}")
    out = xb.reshape(n, c, t // pt, pt, f // pf, pf).mean(axis=(3, 5))

    def bw(g):
        gb = g if not squeeze else g[None]
        gx = np.repeat(np.repeat(gb, pt, axis=2), pf, axis=3) / (pt * pf)
        return (gx[0] if squeeze else gx,)

    return _record(out[0] if squeeze else out, (x,), bw, "avg_pool2d")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel normalization over (batch, T, F).

    In train mode the running statistics arrays are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    xb, squeeze = _batched(x, 3)
    c = xb.shape[1]
    if gamma.shape != (c,):
        raise DimensionError(f"batch_norm: {c} channels but state has shape {gamma.shape}")
    shape = (1, c, 1, 1)
    if train:
        mu = xb.mean(axis=(0, 2, 3))
        var = xb.var(axis=(0, 2, 3))
        if update_stats:
            running_mean *= momentum
            running_mean += (1 - momentum) * mu
            running_var *= momentum
            running_var += (1 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xb - mu.reshape(shape)) * inv.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    m = xb.shape[0] * xb.shape[2] * xb.shape[3]

    def bw(g):
        gb = g if not squeeze else g[None]
        gg = (gb * xhat).sum(axis=(0, 2, 3))
        gbeta = gb.sum(axis=(0, 2, 3))
        gxhat = gb * gamma.data.reshape(shape)
        if train:
            gx = (inv.reshape(shape) / m) * (
                m * gxhat
                - gxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            )
        else:
            gx = gxhat * inv.reshape(shape)
        return (gx[0] if squeeze else gx, gg, gbeta)

    return _record(out[0] if squeeze else out, (x, gamma, beta), bw, "batch_norm")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis."""
    xd = x.data
    d = xd.shape[-1]
    mu = xd.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(xd.var(axis=-1, keepdims=True) + eps)
    xhat = (xd - mu) * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gxhat = g * gamma.data
        gx = (inv / d) * (
            d * gxhat - gxhat.sum(axis=-1, keepdims=True) - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _record(out, (x, gamma, beta), bw, "layer_norm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity outside training."""
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _record(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def local_window_sum(weights: Tensor, values: Tensor) -> Tensor:
    """``out[n,t] = sum_j weights[n,t,j] * values[n, t + j - c//2]``; frames outside [0, T) contribute zero."""
    a = weights.data
    v = values.data
    if a.ndim != 3 or v.ndim != 3 or a.shape[:2] != v.shape[:2]:
        raise DimensionError(f"local_window_sum: weights {a.shape} and values {v.shape} disagree")
    n, t, c = a.shape
    half = c // 2
    vp = np.pad(v, ((0, 0), (half, c - 1 - half), (0, 0)))
    out = np.zeros_like(v)
    for j in range(c):
        out += a[:, :, j : j + 1] * vp[:, j : j + t]

    def bw(g):
        ga = np.empty_like(a)
        gvp = np.zeros_like(vp)
        for j in range(c):
            ga[:, :, j] = (g * vp[:, j : j + t]).sum(axis=-1)
            gvp[:, j : j + t] += a[:, :, j : j + 1] * g
        return ga, gvp[:, half : half + t]

    return _record(out, (weights, values), bw, "local_window_sum")


def _sig(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def gru(x: Tensor, w_in: Tensor, w_hid: Tensor, b_in: Tensor, b_hid: Tensor) -> Tensor:
    """Single-direction GRU over ``x [N, T, D]`` from a zero initial state.

    Gate layout along the last axis of the weights is (reset, update, candidate):

        r = sig(x W_r + b_r + h U_r + c_r)
        z = sig(x W_z + b_z + h U_z + c_z)
        n = tanh(x W_n + b_n + r * (h U_n + c_n))
        h' = (1 - z) * n + z * h
    """
    xd = x.data
    if xd.ndim != 3:
        raise DimensionError(f"gru expects [N, T, D], got {xd.shape}")
    nb, t_len, _ = xd.shape
    hid = w_hid.shape[0]
    if w_in.shape != (xd.shape[2], 3 * hid) or w_hid.shape != (hid, 3 * hid):
        raise DimensionError(f"gru weight shapes {w_in.shape}, {w_hid.shape} do not fit input {xd.shape}")
    gx = xd @ w_in.data + b_in.data  # [N, T, 3H]
    U = w_hid.data
    hs = np.zeros((nb, t_len + 1, hid))
    rs = np.empty((nb, t_len, hid))
    zs = np.empty_like(rs)
    ns = np.empty_like(rs)
    hus = np.empty_like(rs)  # h U_n + c_n, needed for the reset-gate gradient
    for t in range(t_len):
        h = hs[:, t]
        gh = h @ U + b_hid.data
        r = _sig(gx[:, t, :hid] + gh[:, :hid])
        z = _sig(gx[:, t, hid : 2 * hid] + gh[:, hid : 2 * hid])
        hn = gh[:, 2 * hid :]
        n = np.tanh(gx[:, t, 2 * hid :] + r * hn)
        hs[:, t + 1] = (1.0 - z) * n + z * h
        rs[:, t], zs[:, t], ns[:, t], hus[:, t] = r, z, n, hn

    def bw(g):
        d_gx = np.empty_like(gx)
        d_gh_all = np.empty((nb, t_len, 3 * hid))
        dh = np.zeros((nb, hid))
        for t in reversed(range(t_len)):
            dh = dh + g[:, t]
            h = hs[:, t]
            r, z, n, hn = rs[:, t], zs[:, t], ns[:, t], hus[:, t]
            dn = dh * (1.0 - z)
            dz = dh * (h - n)
            dn_pre = dn * (1.0 - n * n)
            dr = dn_pre * hn
            dr_pre = dr * r * (1.0 - r)
            dz_pre = dz * z * (1.0 - z)
            d_gx[:, t, :hid] = dr_pre
            d_gx[:, t, hid : 2 * hid] = dz_pre
            d_gx[:, t, 2 * hid :] = dn_pre
            d_gh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=-1)
            d_gh_all[:, t] = d_gh
            dh = dh * z + d_gh @ U.T
        d_x = d_gx @ w_in.data.T
        d_w_in = np.einsum("ntd,ntg->dg", xd, d_gx)
        d_w_hid = np.einsum("nth,ntg->hg", hs[:, :-1], d_gh_all)
        return d_x, d_w_in, d_w_hid, d_gx.sum(axis=(0, 1)), d_gh_all.sum(axis=(0, 1))

    return _record(hs[:, 1:].copy(), (x, w_in, w_hid, b_in, b_hid), bw, "gru")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis."""
    y = matmul(x, w) if x.ndim >= 2 else matmul(x.reshape(1, -1), w).reshape(-1)
    return add(y, b) if b is not None else y


def bce(p: Tensor, target: np.ndarray, eps: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy of probabilities ``p`` against 0/1 targets."""
    p = clip(p, eps, 1.0 - eps)
    y = as_tensor(target)
    return -mean(y * log(p) + (1.0 - y) * log(1.0 - p))
