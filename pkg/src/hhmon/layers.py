"""Functional 3D-CNN building blocks with explicit backward passes.

Tensors are numpy arrays shaped (N, C, T, H, W).  Every forward returns
(output, cache); the matching backward consumes the cache.  Arithmetic keeps
the input dtype, so tests can run the whole stack in double precision while
training stays in float32.

Convolution uses an im2col view plus one batched matmul; the backward pass
folds the column gradient back with strided slice adds.  Max pooling records
flat argmax indices (first maximum wins on ties) so its backward routes each
output gradient to exactly one input cell.
"""

from __future__ import annotations

import numpy as np

from .errors import ModelError

_PAD_MODES = ("zero", "circular")


def _same_pad(n: int, k: int, s: int) -> tuple[int, int]:
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return total // 2, total - total // 2


def _pad_amounts(shape, kernel, stride, padding):
    if padding == "valid":
        return ((0, 0), (0, 0), (0, 0))
    if padding != "same":
        raise ModelError(f"unknown padding mode {padding!r}")
    return tuple(_same_pad(n, k, s) for n, k, s in zip(shape, kernel, stride))


def _pad5(x: np.ndarray, pads, temporal_pad: str, fill: float) -> np.ndarray:
    (pt0, pt1), (ph0, ph1), (pw0, pw1) = pads
    if temporal_pad not in _PAD_MODES:
        raise ModelError(f"unknown temporal_pad mode {temporal_pad!r}")
    if temporal_pad == "circular" and max(pt0, pt1) > x.shape[2]:
        raise ModelError("circular temporal pad wider than the clip")
    full = ((0, 0), (0, 0), (pt0, pt1), (ph0, ph1), (pw0, pw1))
    if temporal_pad == "circular" and (pt0 or pt1):
        x = np.pad(x, ((0, 0), (0, 0), (pt0, pt1), (0, 0), (0, 0)), mode="wrap")
        full = ((0, 0), (0, 0), (0, 0), (ph0, ph1), (pw0, pw1))
    return np.pad(x, full, mode="constant", constant_values=fill)


def _unpad_grad(dxp: np.ndarray, pads, temporal_pad: str) -> np.ndarray:
    """Fold a padded-input gradient back onto the original extents."""
    (pt0, pt1), (ph0, ph1), (pw0, pw1) = pads
    d = dxp[:, :, :, ph0 : dxp.shape[3] - ph1, pw0 : dxp.shape[4] - pw1]
    t_in = d.shape[2] - pt0 - pt1
    core = d[:, :, pt0 : pt0 + t_in].copy()
    if temporal_pad == "circular":
        if pt0:
            core[:, :, t_in - pt0 :] += d[:, :, :pt0]
        if pt1:
            core[:, :, :pt1] += d[:, :, pt0 + t_in :]
    return core


def _windows(xp: np.ndarray, kernel, stride):
    """Strided sliding-window view (N, C, To, Ho, Wo, kt, kh, kw)."""
    kt, kh, kw = kernel
    st, sh, sw = stride
    N, C, T, H, W = xp.shape
    To, Ho, Wo = (T - kt) // st + 1, (H - kh) // sh + 1, (W - kw) // sw + 1
    if min(To, Ho, Wo) < 1:
        raise ModelError(f"kernel {tuple(kernel)} with stride {tuple(stride)} "
                         f"exceeds input {(T, H, W)}")
    s = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(N, C, To, Ho, Wo, kt, kh, kw),
        strides=(s[0], s[1], s[2] * st, s[3] * sh, s[4] * sw, s[2], s[3], s[4]),
    )


def conv3d_forward(
    x: np.ndarray,
    kernel: np.ndarray,
    bias: np.ndarray,
    stride=(1, 1, 1),
    padding: str = "same",
    temporal_pad: str = "zero",
):
    """Cross-correlation over (T, H, W); kernel is (Cout, Cin, kT, kH, kW)."""
    if x.ndim != 5 or kernel.ndim != 5:
        raise ModelError(f"conv3d expects 5d input and kernel, got {x.ndim}d and {kernel.ndim}d")
    if x.shape[1] != kernel.shape[1]:
        raise ModelError(f"conv3d channel mismatch: input has {x.shape[1]}, "
                         f"kernel expects {kernel.shape[1]}")
    c_out = kernel.shape[0]
    if bias.shape != (c_out,):
        raise ModelError(f"conv3d bias must have shape ({c_out},), got {bias.shape}")
    pads = _pad_amounts(x.shape[2:], kernel.shape[2:], stride, padding)
    xp = _pad5(x, pads, temporal_pad, 0.0)
    win = _windows(xp, kernel.shape[2:], stride)
    N, _, To, Ho, Wo = win.shape[:5]
    # (N, P, K) columns; the reshape materializes a contiguous copy
    cols = win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(N, To * Ho * Wo, -1)
    kmat = kernel.reshape(c_out, -1)
    y = cols @ kmat.T + bias
    y = y.transpose(0, 2, 1).reshape(N, c_out, To, Ho, Wo)
    cache = (cols, kernel, x.shape, xp.shape, pads, stride, temporal_pad)
    return y, cache


def conv3d_backward(dy: np.ndarray, cache):
    """Gradients (dx, dkernel, dbias) for conv3d_forward."""
    cols, kernel, xshape, xpshape, pads, stride, temporal_pad = cache
    c_out, c_in, kt, kh, kw = kernel.shape
    N = xshape[0]
    To, Ho, Wo = dy.shape[2:]
    st, sh, sw = stride
    dy2 = dy.reshape(N, c_out, -1)
    db = dy2.sum(axis=(0, 2))
    dk = np.matmul(dy2, cols).sum(axis=0).reshape(kernel.shape)
    dcols = dy2.transpose(0, 2, 1) @ kernel.reshape(c_out, -1)
    dcw = dcols.reshape(N, To, Ho, Wo, c_in, kt, kh, kw)
    dxp = np.zeros(xpshape, dtype=dy.dtype)
    for it in range(kt):
        for ih in range(kh):
            for iw in range(kw):
                dxp[:, :, it : it + To * st : st, ih : ih + Ho * sh : sh,
                    iw : iw + Wo * sw : sw] += dcw[:, :, :, :, :, it, ih, iw].transpose(0, 4, 1, 2, 3)
    dx = _unpad_grad(dxp, pads, temporal_pad)
    return dx, dk, db


def maxpool3d_forward(x, kernel, stride=None, padding: str = "valid", temporal_pad: str = "zero"):
    """Max over sliding windows; padding cells never win (filled with -inf)."""
    stride = stride or kernel
    pads = _pad_amounts(x.shape[2:], kernel, stride, padding)
    xp = _pad5(x, pads, temporal_pad, -np.inf)
    win = _windows(xp, kernel, stride)
    flat = win.reshape(*win.shape[:5], -1)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    cache = (idx, xp.shape, kernel, stride, pads, temporal_pad)
    return y, cache


def maxpool3d_backward(dy: np.ndarray, cache):
    idx, xpshape, kernel, stride, pads, temporal_pad = cache
    kt, kh, kw = kernel
    st, sh, sw = stride
    N, C, To, Ho, Wo = dy.shape
    dt = idx // (kh * kw)
    rem = idx % (kh * kw)
    dh = rem // kw
    dw = rem % kw
    n_i, c_i, t_i, h_i, w_i = np.ogrid[:N, :C, :To, :Ho, :Wo]
    dxp = np.zeros(xpshape, dtype=dy.dtype)
    np.add.at(dxp, (n_i, c_i, t_i * st + dt, h_i * sh + dh, w_i * sw + dw), dy)
    return _unpad_grad(dxp, pads, temporal_pad)


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask) -> np.ndarray:
    return dy * mask


def global_avg_pool_forward(x: np.ndarray):
    """(N, C, T, H, W) -> (N, C), averaging over all of T, H, W."""
    return x.mean(axis=(2, 3, 4)), x.shape


def global_avg_pool_backward(dy: np.ndarray, xshape) -> np.ndarray:
    n = xshape[2] * xshape[3] * xshape[4]
    return np.broadcast_to(dy[:, :, None, None, None] / n, xshape).astype(dy.dtype, copy=True)


def concat_forward(xs: list[np.ndarray]):
    sizes = [x.shape[1] for x in xs]
    return np.concatenate(xs, axis=1), sizes


def concat_backward(dy: np.ndarray, sizes) -> list[np.ndarray]:
    return list(np.split(dy, np.cumsum(sizes)[:-1], axis=1))


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """The pooled-feature head: (N, F) @ (F, O) + (O,); a 1x1x1 conv in effect."""
    if x.shape[1] != w.shape[0]:
        raise ModelError(f"head expects {w.shape[0]} features, got {x.shape[1]}")
    return x @ w + b, x


def dense_backward(dy: np.ndarray, cache, w: np.ndarray):
    x = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.result_type(z.dtype, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits: np.ndarray, labels: np.ndarray):
    """Mean binary cross-entropy on sigmoid(logits); returns (loss, dlogits)."""
    z = logits
    y = labels.astype(z.dtype)
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per.mean())
    if not np.isfinite(loss):
        raise ModelError("nonfinite training loss")
    dz = (sigmoid(z) - y) / z.shape[0]
    return loss, dz
