"""Differentiable operations on :class:`Tensor`.

Each op computes its forward value with numpy and attaches a closure that
returns one gradient per parent (``None`` for non-differentiable inputs).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .. import kernels
from .tensor import Tensor, constant

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


class ShapeError(ValueError):
    pass


def _need(cond: bool, msg: str):
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(out, (a, b), bw)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, (a,), lambda g: (g * c,))


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def getitem(a: Tensor, key) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return Tensor(a.data[key], (a,), bw)


def take(a: Tensor, index, axis: int = -1) -> Tensor:
    """Gather along one axis with an integer index array."""
    index = np.asarray(index)
    axis = axis % a.data.ndim

    def bw(g):
        full = np.zeros_like(a.data)
        sl = [slice(None)] * a.data.ndim
        sl[axis] = index
        np.add.at(full, tuple(sl), g)
        return (full,)

    return Tensor(np.take(a.data, index, axis=axis), (a,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [constant(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def total(a: Tensor) -> Tensor:
    return Tensor(a.data.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return Tensor(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)
    return Tensor(y, (a,), lambda g: (g * y * (1.0 - y),))


def activate(a: Tensor, name: str) -> Tensor:
    if name == "identity":
        return a
    if name == "relu":
        return relu(a)
    if name == "tanh":
        return tanh(a)
    if name == "sigmoid":
        return sigmoid(a)
    raise ValueError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def linear(x, w: Tensor, b: Tensor) -> Tensor:
    """``x @ W.T + b`` for x [..., n_in], W [n_out, n_in], b [n_out]."""
    x = constant(x)
    _need(w.data.ndim == 2 and b.shape == (w.shape[0],), f"bad dense params {w.shape}, {b.shape}")
    _need(x.shape[-1] == w.shape[1], f"input width {x.shape[-1]} != {w.shape[1]}")
    out = x.data @ w.data.T + b.data

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        return g @ w.data, g2.T @ x2, g2.sum(axis=0)

    return Tensor(out, (x, w, b), bw)


def dense(x, w: Tensor, b: Tensor, activation: str = "identity") -> Tensor:
    return activate(linear(x, w, b), activation)


def _lstm_gates(z, n):
    i = expit(z[:, :n])
    f = expit(z[:, n:2 * n])
    o = expit(z[:, 2 * n:3 * n])
    g = np.tanh(z[:, 3 * n:])
    return i, f, o, g


def _lstm_check(x, wx, wh, b):
    n = wh.shape[0]
    _need(wx.data.ndim == 2 and wx.shape[1] == 4 * n, f"LSTM input kernel {wx.shape} vs width {n}")
    _need(wh.shape == (n, 4 * n) and b.shape == (4 * n,), "LSTM recurrent kernel/bias shape")
    _need(x.shape[-1] == wx.shape[0], f"LSTM input width {x.shape[-1]} != {wx.shape[0]}")
    return n


def lstm_step(x, h, c, wx: Tensor, wh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM cell update; gate order in the kernels is i, f, o, g.

    x [B, n_in], h and c [B, n_h]; returns (h', c').
    """
    x, h, c = constant(x), constant(h), constant(c)
    n = _lstm_check(x, wx, wh, b)
    _need(h.shape[-1] == n and c.shape == h.shape, "LSTM state shape")
    z = x.data @ wx.data + h.data @ wh.data + b.data
    i, f, o, g = _lstm_gates(z, n)
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    def bw(grad):
        dh = grad[:, :n]
        dc = grad[:, n:] + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c.data * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=1)
        return dz @ wx.data.T, dz @ wh.data.T, dc * f, x.data.T @ dz, h.data.T @ dz, dz.sum(axis=0)

    hc = Tensor(np.concatenate([h_new, c_new], axis=1), (x, h, c, wx, wh, b), bw)
    return getitem(hc, (slice(None), slice(0, n))), getitem(hc, (slice(None), slice(n, 2 * n)))


def lstm(xs, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Run an LSTM over xs [B, T, n_in] from zero state; returns all h [B, T, n_h].

    Fused forward pass with backpropagation through time in the closure.
    """
    xs = constant(xs)
    _need(xs.data.ndim == 3, f"lstm expects [B, T, n_in], got {xs.shape}")
    n = _lstm_check(xs, wx, wh, b)
    bsz, steps, _ = xs.shape
    X = xs.data
    Wx, Wh, bias = wx.data, wh.data, b.data
    hs = np.zeros((bsz, steps, n))
    cs = np.zeros((bsz, steps, n))
    gates = np.zeros((bsz, steps, 4 * n))
    # input projections for all steps at once
    zx = (X.reshape(-1, X.shape[-1]) @ Wx).reshape(bsz, steps, 4 * n) + bias
    h = np.zeros((bsz, n))
    c = np.zeros((bsz, n))
    for t in range(steps):
        z = zx[:, t] + h @ Wh
        i, f, o, g = _lstm_gates(z, n)
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :n], gates[:, t, n:2 * n], gates[:, t, 2 * n:3 * n], gates[:, t, 3 * n:] = i, f, o, g
        hs[:, t] = h
        cs[:, t] = c

    def bw(dH):
        dz_all = np.zeros((bsz, steps, 4 * n))
        dWh = np.zeros_like(Wh)
        dh_next = np.zeros((bsz, n))
        dc_next = np.zeros((bsz, n))
        for t in range(steps - 1, -1, -1):
            i = gates[:, t, :n]
            f = gates[:, t, n:2 * n]
            o = gates[:, t, 2 * n:3 * n]
            g = gates[:, t, 3 * n:]
            tc = np.tanh(cs[:, t])
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((bsz, n))
            dh = dH[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[:, t]
            dz[:, :n] = dc * g * i * (1.0 - i)
            dz[:, n:2 * n] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * n:3 * n] = dh * tc * o * (1.0 - o)
            dz[:, 3 * n:] = dc * i * (1.0 - g * g)
            if t > 0:
                dWh += hs[:, t - 1].T @ dz
            dh_next = dz @ Wh.T
            dc_next = dc * f
        flat = dz_all.reshape(-1, 4 * n)
        dX = (flat @ Wx.T).reshape(X.shape)
        dWx = X.reshape(-1, X.shape[-1]).T @ flat
        return dX, dWx, dWh, flat.sum(axis=0)

    return Tensor(hs, (xs, wx, wh, b), bw)


def conv2d(x, w: Tensor, b: Tensor) -> Tensor:
    """Valid, stride-1 cross-correlation. x [N, Cin, R, C], w [Cout, Cin, fR, fC]."""
    x = constant(x)
    _need(x.data.ndim == 4 and w.data.ndim == 4, "conv2d expects 4D input and weights")
    _need(x.shape[1] == w.shape[1], f"channels {x.shape[1]} != {w.shape[1]}")
    _need(w.shape[2] <= x.shape[2] and w.shape[3] <= x.shape[3], "filter larger than input")
    _need(b.shape == (w.shape[0],), "conv2d bias shape")
    out = kernels.conv_forward(np.ascontiguousarray(x.data), w.data, b.data)

    def bw(g):
        return kernels.conv_backward(np.ascontiguousarray(x.data), w.data, np.ascontiguousarray(g))

    return Tensor(out, (x, w, b), bw)


def local2d(x, w: Tensor, b: Tensor) -> Tensor:
    """Locally connected layer: one filter bank per output position.

    w [P, Cout, Cin, fR, fC], b [P, Cout] with P output positions in
    row-major order.
    """
    x = constant(x)
    _need(x.data.ndim == 4 and w.data.ndim == 5, "local2d expects 4D input and 5D weights")
    _need(x.shape[1] == w.shape[2], f"channels {x.shape[1]} != {w.shape[2]}")
    _need(w.shape[3] <= x.shape[2] and w.shape[4] <= x.shape[3], "filter larger than input")
    npos = (x.shape[2] - w.shape[3] + 1) * (x.shape[3] - w.shape[4] + 1)
    _need(w.shape[0] == npos, f"{w.shape[0]} filter banks for {npos} output positions")
    _need(b.shape == (npos, w.shape[1]), "local2d bias shape")
    out = kernels.local_forward(np.ascontiguousarray(x.data), w.data, b.data)

    def bw(g):
        return kernels.local_backward(np.ascontiguousarray(x.data), w.data, np.ascontiguousarray(g))

    return Tensor(out, (x, w, b), bw)


def dropout(x, rate: float, train: bool, rng=None) -> Tensor:
    """Inverted dropout; identity in eval mode or at rate 0.

    ``rng`` is a numpy Generator or an integer seed.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = constant(x)
    if not train or rate == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Tensor(x.data * mask, (x,), lambda g: (g * mask,))


def l2_penalty(params, lam: float) -> Tensor:
    """``lam * sum(w**2)`` over the given parameters; gradient ``2 * lam * w``."""
    if lam < 0:
        raise ValueError("l2 lambda must be >= 0")
    params = list(params)
    val = lam * sum(float(np.sum(p.data * p.data)) for p in params)
    return Tensor(val, params, lambda g: tuple(2.0 * lam * g * p.data for p in params))


# ---------------------------------------------------------------------------
# losses on pooled predicted values
# ---------------------------------------------------------------------------


def _weighted_sq(pred: Tensor, target, power: int) -> Tensor:
    v = np.maximum(np.asarray(target, dtype=np.float64), 0.0)
    _need(v.shape == pred.shape, f"target shape {v.shape} != prediction shape {pred.shape}")
    w = v ** power
    diff = pred.data - v
    n = diff.size
    val = float(np.sum(w * diff * diff)) / n
    return Tensor(val, (pred,), lambda g: (g * 2.0 * w * diff / n,))


def mse_loss(pred: Tensor, target) -> Tensor:
    return _weighted_sq(pred, target, 0)


def rle_loss(pred: Tensor, target) -> Tensor:
    return _weighted_sq(pred, target, 1)


def r2le_loss(pred: Tensor, target) -> Tensor:
    return _weighted_sq(pred, target, 2)


LOSSES = {"mse": mse_loss, "rle": rle_loss, "r2le": r2le_loss}
