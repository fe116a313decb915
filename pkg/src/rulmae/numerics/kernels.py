"""Forward/backward kernels on float64 numpy arrays.

Every ``*_fwd`` returns ``(out, cache)`` and the matching ``*_bwd`` takes
``(dout, cache)`` and returns input gradients in argument order.  Leading
dimensions are treated as batch dimensions throughout.
"""
from __future__ import annotations

import numpy as np

from ..errors import AllMasked, BadHeadCount, NonFinite, ShapeMismatch


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def _sum_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# --- linear ------------------------------------------------------------------

def linear_fwd(x, W, b=None):
    _check(x.shape[-1] == W.shape[0], f"linear: input dim {x.shape[-1]} vs weight {W.shape}")
    if b is not None:
        _check(b.shape == (W.shape[1],), f"linear: bias {b.shape} vs weight {W.shape}")
    y = (x.reshape(-1, W.shape[0]) @ W).reshape(x.shape[:-1] + (W.shape[1],))
    if b is not None:
        y += b
    return y, (x, W, b is not None)


def linear_bwd(dy, cache):
    x, W, has_bias = cache
    dy2 = dy.reshape(-1, dy.shape[-1])
    dx = (dy2 @ W.T).reshape(x.shape)
    dW = x.reshape(-1, x.shape[-1]).T @ dy2
    db = dy2.sum(axis=0) if has_bias else None
    return dx, dW, db


# --- temporal convolution ----------------------------------------------------

def conv1d_fwd(x, w, b=None, padding: int = 1):
    """Cross-correlation over the second-to-last axis.

    x: [..., T, C_in], w: [k, C_in, C_out] -> [..., T + 2*padding - k + 1, C_out]
    """
    k, c_in, c_out = w.shape
    _check(x.shape[-1] == c_in, f"conv1d: input channels {x.shape[-1]} vs kernel {w.shape}")
    T = x.shape[-2]
    t_out = T + 2 * padding - k + 1
    _check(t_out >= 1, "conv1d: kernel longer than padded input")
    pad = [(0, 0)] * (x.ndim - 2) + [(padding, padding), (0, 0)]
    xp = np.pad(x, pad)
    cols = np.stack([xp[..., i : i + t_out, :] for i in range(k)], axis=-2)  # [..., t_out, k, C_in]
    cols = cols.reshape(cols.shape[:-2] + (k * c_in,))
    y = cols @ w.reshape(k * c_in, c_out)
    if b is not None:
        y = y + b
    return y, (cols, w, x.shape, padding, b is not None)


def conv1d_bwd(dy, cache):
    cols, w, x_shape, padding, has_bias = cache
    k, c_in, c_out = w.shape
    t_out = dy.shape[-2]
    dw = (cols.reshape(-1, k * c_in).T @ dy.reshape(-1, c_out)).reshape(k, c_in, c_out)
    dcols = (dy @ w.reshape(k * c_in, c_out).T).reshape(dy.shape[:-1] + (k, c_in))
    T = x_shape[-2]
    dxp = np.zeros(x_shape[:-2] + (T + 2 * padding, c_in))
    for i in range(k):
        dxp[..., i : i + t_out, :] += dcols[..., i, :]
    dx = dxp[..., padding : padding + T, :]
    db = dy.reshape(-1, c_out).sum(axis=0) if has_bias else None
    return dx, dw, db


# --- pointwise ---------------------------------------------------------------

def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glu_fwd(a, b):
    """Gated linear unit: a * sigmoid(b)."""
    _check(a.shape == b.shape, f"glu: {a.shape} vs {b.shape}")
    s = sigmoid(b)
    return a * s, (a, s)


def glu_bwd(dout, cache):
    a, s = cache
    return dout * s, dout * a * s * (1.0 - s)


def relu_fwd(x):
    keep = x > 0
    return x * keep, keep


def relu_bwd(dout, keep):
    return dout * keep


def add_fwd(a, b):
    return a + b, (a.shape, b.shape)


def add_bwd(dout, cache):
    sa, sb = cache
    return _sum_to(dout, sa), _sum_to(dout, sb)


# --- softmax -----------------------------------------------------------------

def softmax_fwd(x, axis: int = -1):
    if not np.all(np.isfinite(x)):
        raise NonFinite("softmax input contains non-finite values")
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return y, (y, axis)


def softmax_bwd(dy, cache):
    y, axis = cache
    return y * (dy - (dy * y).sum(axis=axis, keepdims=True))


# --- layer norm --------------------------------------------------------------

def layer_norm_fwd(x, gamma, beta, eps: float = 1e-5):
    _check(gamma.shape == (x.shape[-1],) and beta.shape == gamma.shape,
           f"layer_norm: affine shape {gamma.shape} vs features {x.shape[-1]}")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_bwd(dy, cache):
    xhat, inv, gamma = cache
    D = xhat.shape[-1]
    dgamma = (dy * xhat).reshape(-1, D).sum(axis=0)
    dbeta = dy.reshape(-1, D).sum(axis=0)
    dxhat = dy * gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


# --- dropout -----------------------------------------------------------------

def dropout_fwd(x, rate: float, rng: np.random.Generator | None, training: bool = True):
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate == 0.0:
        return x, None
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(x.shape, dtype=np.float32) >= rate
    scale = keep * (1.0 / (1.0 - rate))
    return x * scale, scale


def dropout_bwd(dout, scale):
    return dout if scale is None else dout * scale


# --- multi-head attention ----------------------------------------------------

def _split_heads(x, H):
    *lead, n, d = x.shape
    return np.swapaxes(x.reshape(*lead, n, H, d // H), -2, -3)  # [..., H, n, dh]


def _merge_heads(x):
    *lead, H, n, dh = x.shape
    return np.swapaxes(x, -2, -3).reshape(*lead, n, H * dh)


def mha_fwd(q, k, v, Wq, bq, Wk, bk, Wv, bv, Wo, bo, heads: int):
    """Scaled dot-product attention over ``heads`` heads, then an output projection.

    q: [..., n_q, d]; k, v: [..., n_k, d]; all weights [d, d], biases [d].
    """
    d = q.shape[-1]
    if heads < 1 or d % heads:
        raise BadHeadCount(f"model dim {d} not divisible by {heads} heads")
    _check(k.shape[-1] == d and v.shape[-1] == d and k.shape[-2] == v.shape[-2],
           "mha: key/value shapes incompatible with query")
    Q, cq = linear_fwd(q, Wq, bq)
    K, ck = linear_fwd(k, Wk, bk)
    V, cv = linear_fwd(v, Wv, bv)
    Qh, Kh, Vh = _split_heads(Q, heads), _split_heads(K, heads), _split_heads(V, heads)
    scale = 1.0 / np.sqrt(d // heads)
    scores = (Qh @ np.swapaxes(Kh, -1, -2)) * scale
    A, cs = softmax_fwd(scores, axis=-1)
    ctx = _merge_heads(A @ Vh)
    out, co = linear_fwd(ctx, Wo, bo)
    return out, (cq, ck, cv, co, cs, Qh, Kh, Vh, A, scale, heads)


def mha_bwd(dout, cache):
    """Returns (dq, dk, dv, dWq, dbq, dWk, dbk, dWv, dbv, dWo, dbo)."""
    cq, ck, cv, co, cs, Qh, Kh, Vh, A, scale, heads = cache
    dctx, dWo, dbo = linear_bwd(dout, co)
    dctx_h = _split_heads(dctx, heads)
    dA = dctx_h @ np.swapaxes(Vh, -1, -2)
    dVh = np.swapaxes(A, -1, -2) @ dctx_h
    dscores = softmax_bwd(dA, cs) * scale
    dQh = dscores @ Kh
    dKh = np.swapaxes(dscores, -1, -2) @ Qh
    dq, dWq, dbq = linear_bwd(_merge_heads(dQh), cq)
    dk, dWk, dbk = linear_bwd(_merge_heads(dKh), ck)
    dv, dWv, dbv = linear_bwd(_merge_heads(dVh), cv)
    return dq, dk, dv, dWq, dbq, dWk, dbk, dWv, dbv, dWo, dbo


# --- losses ------------------------------------------------------------------

def mse_fwd(pred, target, mask=None):
    """Mean squared error over all elements, or over elements where ``mask`` is true.

    ``mask`` broadcasts against ``pred``; the mean divides by the number of
    selected elements of ``pred``.
    """
    _check(pred.shape == target.shape, f"mse: {pred.shape} vs {target.shape}")
    diff = pred - target
    if mask is None:
        w = np.ones_like(pred)
    else:
        w = np.broadcast_to(np.asarray(mask, dtype=np.float64), pred.shape)
    count = w.sum()
    if count == 0:
        raise AllMasked("every element is masked out of the loss")
    return float((w * diff * diff).sum() / count), (diff, w, count)


def mse_bwd(dloss, cache):
    diff, w, count = cache
    return dloss * 2.0 * w * diff / count


# --- patch geometry ----------------------------------------------------------

def overlap_average_fwd(patches, P: int):
    """[..., N, K, C] per-patch predictions -> [..., P, C] mean over covering patches."""
    N, K = patches.shape[-3], patches.shape[-2]
    _check(N + K - 1 == P, f"overlap_average: {N} patches of {K} do not tile {P} steps")
    count = np.zeros(P)
    out = np.zeros(patches.shape[:-3] + (P, patches.shape[-1]))
    for i in range(K):
        out[..., i : i + N, :] += patches[..., :, i, :]
        count[i : i + N] += 1
    inv = (1.0 / count)[:, None]
    return out * inv, (inv, N, K)


def overlap_average_bwd(dout, cache):
    inv, N, K = cache
    g = dout * inv
    return np.stack([g[..., i : i + N, :] for i in range(K)], axis=-2)


def gather_rows_fwd(x, idx):
    """x [B, N, d], idx [B, n] -> [B, n, d]."""
    return np.take_along_axis(x, idx[..., None], axis=-2), (x.shape, idx)


def gather_rows_bwd(dout, cache):
    shape, idx = cache
    dx = np.zeros(shape)
    np.put_along_axis(dx, idx[..., None], dout, axis=-2)
    return dx


def scatter_rows_fwd(x, idx, N: int):
    """x [B, n, d] placed at rows idx of a zero [B, N, d] array."""
    out = np.zeros(x.shape[:-2] + (N, x.shape[-1]))
    np.put_along_axis(out, idx[..., None], x, axis=-2)
    return out, idx


def scatter_rows_bwd(dout, idx):
    return np.take_along_axis(dout, idx[..., None], axis=-2)
