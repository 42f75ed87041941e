"""Forward/backward kernels for the fixed layer set.

Activations are batched NHWC (images) or ``(batch, features)`` float64 arrays.
Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes that cache and the upstream gradient.
"""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7


def glorot_uniform_init(fan_in: int, fan_out: int, shape, rng) -> np.ndarray:
    """Uniform draws on +-sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fan_in and fan_out must be positive")
    rng = np.random.default_rng(rng)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, padding: int = 0):
    """Cross-correlation with kernel ``w`` of shape ``(kh, kw, in_ch, out_ch)``."""
    kh, kw, cin, cout = w.shape
    if x.ndim != 4 or x.shape[3] != cin:
        raise ValueError(f"conv2d expects (N, H, W, {cin}) input, got {x.shape}")
    if padding:
        xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    else:
        xp = x
    n, hp, wp, _ = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ValueError("conv2d output would be empty")
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :ho, :wo]  # (N, ho, wo, cin, kh, kw)
    cols = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, -1)
    out = (cols @ w.reshape(-1, cout)).reshape(n, ho, wo, cout) + b
    return out, (cols, xp.shape, w, stride, padding)


def conv2d_backward(cache, grad: np.ndarray):
    cols, xp_shape, w, stride, padding = cache
    kh, kw, cin, cout = w.shape
    n, ho, wo, _ = grad.shape
    g2 = grad.reshape(-1, cout)
    dw = (cols.T @ g2).reshape(w.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ w.reshape(-1, cout).T).reshape(n, ho, wo, kh, kw, cin)
    dxp = np.zeros(xp_shape)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride, :] += dcols[
                :, :, :, i, j, :
            ]
    if padding:
        dxp = dxp[:, padding:-padding, padding:-padding, :]
    return dxp, dw, db


def maxpool2d_forward(x: np.ndarray, pool_h: int, pool_w: int):
    n, h, w, c = x.shape
    if h % pool_h or w % pool_w:
        raise ValueError(f"pool {pool_h}x{pool_w} does not divide spatial dims {(h, w)}")
    ho, wo = h // pool_h, w // pool_w
    blocks = x.reshape(n, ho, pool_h, wo, pool_w, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, ho, wo, c, pool_h * pool_w)
    # argmax returns the first maximum, which fixes tie routing
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, pool_h, pool_w)


def maxpool2d_backward(cache, grad: np.ndarray) -> np.ndarray:
    shape, arg, pool_h, pool_w = cache
    n, h, w, c = shape
    ho, wo = h // pool_h, w // pool_w
    dblocks = np.zeros((n, ho, wo, c, pool_h * pool_w))
    np.put_along_axis(dblocks, arg[..., None], grad[..., None], axis=-1)
    dblocks = dblocks.reshape(n, ho, wo, c, pool_h, pool_w).transpose(0, 1, 4, 2, 5, 3)
    return dblocks.reshape(shape)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """``y = x W + b`` with ``w`` of shape ``(in_dim, out_dim)``."""
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"dense expects {w.shape[0]} input features, got {x.shape[-1]}")
    return x @ w + b, (x, w)


def dense_backward(cache, grad: np.ndarray):
    """Return ``(dx, dw, db)``; ``dw`` and ``db`` are summed over the batch."""
    x, w = cache
    return grad @ w.T, x.T @ grad, grad.sum(axis=0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activation_forward(x: np.ndarray, kind: str):
    if kind == "relu":
        return np.maximum(x, 0.0), x
    if kind == "sigmoid":
        y = sigmoid(x)
        return y, y
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(kind: str, cache, grad: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return grad * (cache > 0)
    if kind == "sigmoid":
        return grad * cache * (1.0 - cache)
    raise ValueError(f"unknown activation {kind!r}")


def bce_loss(p, y) -> np.ndarray:
    """Elementwise binary cross-entropy on probabilities clamped to [eps, 1 - eps]."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def bce_grad(p, y) -> np.ndarray:
    """d loss / d p, using the same clamping as ``bce_loss``."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    return (p - y) / (p * (1.0 - p))
