"""Hot numeric kernels, each in a numba and a numpy flavour.

The Gibbs kernels agree bit-for-bit across flavours: random draws are passed
in as arrays of uniforms and cumulative sums are taken left to right in both.
The conv/local kernels agree to rounding. Public names at the bottom of the
module dispatch on :data:`topicast._accel.USE_NUMBA`.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# collapsed Gibbs sampling for LDA
# ---------------------------------------------------------------------------


@njit
def _gibbs_sweep_numba(words, docs, z, ndk, nkw, nk, alpha, beta, vbeta, uniforms):
    k = nk.shape[0]
    p = np.empty(k)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        t = z[i]
        ndk[d, t] -= 1
        nkw[t, w] -= 1
        nk[t] -= 1
        acc = 0.0
        for j in range(k):
            acc += (ndk[d, j] + alpha) * (nkw[j, w] + beta) / (nk[j] + vbeta)
            p[j] = acc
        u = uniforms[i] * acc
        t = k - 1
        for j in range(k):
            if u < p[j]:
                t = j
                break
        z[i] = t
        ndk[d, t] += 1
        nkw[t, w] += 1
        nk[t] += 1


def _gibbs_sweep_numpy(words, docs, z, ndk, nkw, nk, alpha, beta, vbeta, uniforms):
    k = nk.shape[0]
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        t = z[i]
        ndk[d, t] -= 1
        nkw[t, w] -= 1
        nk[t] -= 1
        # np.cumsum accumulates left to right, like the loop version
        p = np.cumsum((ndk[d] + alpha) * (nkw[:, w] + beta) / (nk + vbeta))
        t = min(int(np.searchsorted(p, uniforms[i] * p[-1], side="right")), k - 1)
        z[i] = t
        ndk[d, t] += 1
        nkw[t, w] += 1
        nk[t] += 1


@njit
def _fold_in_numba(words, phi, alpha, z, uniforms, burn_in):
    """Gibbs fold-in of one document against frozen topic-word weights.

    ``uniforms`` has shape [iterations, n_words]. Returns the share of the
    document's words assigned to each topic, averaged over the sweeps after
    ``burn_in``.
    """
    k = phi.shape[0]
    n = words.shape[0]
    iters = uniforms.shape[0]
    counts = np.zeros(k)
    for i in range(n):
        counts[z[i]] += 1.0
    p = np.empty(k)
    theta = np.zeros(k)
    kept = 0
    for it in range(iters):
        for i in range(n):
            w = words[i]
            counts[z[i]] -= 1.0
            acc = 0.0
            for j in range(k):
                acc += (counts[j] + alpha) * phi[j, w]
                p[j] = acc
            u = uniforms[it, i] * acc
            t = k - 1
            for j in range(k):
                if u < p[j]:
                    t = j
                    break
            z[i] = t
            counts[t] += 1.0
        if it >= burn_in:
            for j in range(k):
                theta[j] += counts[j] / n
            kept += 1
    for j in range(k):
        theta[j] /= kept
    return theta


def _fold_in_numpy(words, phi, alpha, z, uniforms, burn_in):
    k = phi.shape[0]
    n = words.shape[0]
    counts = np.bincount(z, minlength=k).astype(np.float64)
    theta = np.zeros(k)
    kept = 0
    for it in range(uniforms.shape[0]):
        for i in range(n):
            w = words[i]
            counts[z[i]] -= 1.0
            p = np.cumsum((counts + alpha) * phi[:, w])
            t = min(int(np.searchsorted(p, uniforms[it, i] * p[-1], side="right")), k - 1)
            z[i] = t
            counts[t] += 1.0
        if it >= burn_in:
            theta += counts / n
            kept += 1
    return theta / kept


# ---------------------------------------------------------------------------
# 2D convolution and locally connected layers (stride 1, valid padding)
#
# Weights for the shared (conv) case are [Cout, Cin, fR, fC]; for the local
# case [P, Cout, Cin, fR, fC] with P = R' * C' output positions in row-major
# order. Within a flavour the forward pass accumulates in the same order for
# both layer types, so a local layer whose banks are all equal reproduces the
# conv layer exactly.
# ---------------------------------------------------------------------------


@njit
def _gather(x, s, r, c, fr, fc, patch):
    cin = x.shape[1]
    k = 0
    for ci in range(cin):
        for i in range(fr):
            for j in range(fc):
                patch[k] = x[s, ci, r + i, c + j]
                k += 1


@njit
def _scatter(dx, s, r, c, fr, fc, dpatch):
    cin = dx.shape[1]
    k = 0
    for ci in range(cin):
        for i in range(fr):
            for j in range(fc):
                dx[s, ci, r + i, c + j] += dpatch[k]
                k += 1


@njit
def _banked_forward(x, w2, b2, fr, fc, shared):
    # w2: [P or 1, Cout, K]; b2: [P or 1, Cout]
    n, cin, rows, cols = x.shape
    cout = w2.shape[1]
    kk = w2.shape[2]
    ro = rows - fr + 1
    co = cols - fc + 1
    out = np.empty((n, cout, ro, co))
    patch = np.empty(kk)
    for s in range(n):
        for r in range(ro):
            for c in range(co):
                _gather(x, s, r, c, fr, fc, patch)
                pos = 0 if shared else r * co + c
                for o in range(cout):
                    acc = 0.0
                    for k in range(kk):
                        acc += patch[k] * w2[pos, o, k]
                    out[s, o, r, c] = acc + b2[pos, o]
    return out


@njit
def _banked_backward(x, w2, dy, fr, fc, shared):
    n, cin, rows, cols = x.shape
    cout = w2.shape[1]
    kk = w2.shape[2]
    ro = dy.shape[2]
    co = dy.shape[3]
    dx = np.zeros(x.shape)
    dw2 = np.zeros(w2.shape)
    db2 = np.zeros((w2.shape[0], cout))
    patch = np.empty(kk)
    dpatch = np.empty(kk)
    for s in range(n):
        for r in range(ro):
            for c in range(co):
                _gather(x, s, r, c, fr, fc, patch)
                pos = 0 if shared else r * co + c
                dpatch[:] = 0.0
                for o in range(cout):
                    g = dy[s, o, r, c]
                    db2[pos, o] += g
                    for k in range(kk):
                        dw2[pos, o, k] += g * patch[k]
                        dpatch[k] += g * w2[pos, o, k]
                _scatter(dx, s, r, c, fr, fc, dpatch)
    return dx, dw2, db2


def _conv_forward_numba(x, w, b):
    cout, cin, fr, fc = w.shape
    w2 = np.ascontiguousarray(w).reshape(1, cout, cin * fr * fc)
    return _banked_forward(np.ascontiguousarray(x), w2, np.ascontiguousarray(b).reshape(1, cout), fr, fc, True)


def _local_forward_numba(x, w, b):
    npos, cout, cin, fr, fc = w.shape
    w2 = np.ascontiguousarray(w).reshape(npos, cout, cin * fr * fc)
    return _banked_forward(np.ascontiguousarray(x), w2, np.ascontiguousarray(b), fr, fc, False)


def _conv_backward_numba(x, w, dy):
    cout, cin, fr, fc = w.shape
    w2 = np.ascontiguousarray(w).reshape(1, cout, cin * fr * fc)
    dx, dw2, db2 = _banked_backward(np.ascontiguousarray(x), w2, np.ascontiguousarray(dy), fr, fc, True)
    return dx, dw2.reshape(w.shape), db2[0]


def _local_backward_numba(x, w, dy):
    npos, cout, cin, fr, fc = w.shape
    w2 = np.ascontiguousarray(w).reshape(npos, cout, cin * fr * fc)
    dx, dw2, db2 = _banked_backward(np.ascontiguousarray(x), w2, np.ascontiguousarray(dy), fr, fc, False)
    return dx, dw2.reshape(w.shape), db2


def _patches(x, fr, fc):
    """im2col: [N, Cin, R, C] -> [N, P, Cin*fR*fC]."""
    n, cin = x.shape[:2]
    win = sliding_window_view(x, (fr, fc), axis=(2, 3))  # N, Cin, R', C', fR, fC
    ro, co = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, ro * co, cin * fr * fc), ro, co


def _col2im(dcols, x_shape, fr, fc, ro, co):
    n, cin = x_shape[:2]
    d = dcols.reshape(n, ro, co, cin, fr, fc)
    dx = np.zeros(x_shape)
    for i in range(fr):
        for j in range(fc):
            dx[:, :, i:i + ro, j:j + co] += d[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx


def _local_forward_numpy(x, w, b):
    n = x.shape[0]
    npos, cout, cin, fr, fc = w.shape
    cols, ro, co = _patches(x, fr, fc)
    wm = w.reshape(npos, cout, cin * fr * fc)
    out = np.einsum("npi,poi->npo", cols, wm) + b[None]
    return out.reshape(n, ro, co, cout).transpose(0, 3, 1, 2).copy()


def _conv_forward_numpy(x, w, b):
    cout, cin, fr, fc = w.shape
    npos = (x.shape[2] - fr + 1) * (x.shape[3] - fc + 1)
    # shared banks are a special case of local ones; reuse that path so the
    # two layers stay exactly equal in this flavour too
    wl = np.broadcast_to(w, (npos,) + w.shape)
    bl = np.broadcast_to(b, (npos, cout))
    return _local_forward_numpy(x, wl, bl)


def _local_backward_numpy(x, w, dy):
    n = x.shape[0]
    npos, cout, cin, fr, fc = w.shape
    cols, ro, co = _patches(x, fr, fc)
    g = dy.transpose(0, 2, 3, 1).reshape(n, npos, cout)
    dw = np.einsum("npo,npi->poi", g, cols).reshape(w.shape)
    db = g.sum(axis=0)
    dcols = np.einsum("npo,poi->npi", g, w.reshape(npos, cout, -1))
    return _col2im(dcols, x.shape, fr, fc, ro, co), dw, db


def _conv_backward_numpy(x, w, dy):
    cout, cin, fr, fc = w.shape
    n = x.shape[0]
    cols, ro, co = _patches(x, fr, fc)
    g = dy.transpose(0, 2, 3, 1).reshape(n * ro * co, cout)
    flat = cols.reshape(n * ro * co, -1)
    dw = (g.T @ flat).reshape(w.shape)
    db = g.sum(axis=0)
    dcols = g @ w.reshape(cout, -1)
    return _col2im(dcols, x.shape, fr, fc, ro, co), dw, db


if USE_NUMBA:
    gibbs_sweep = _gibbs_sweep_numba
    fold_in = _fold_in_numba
    conv_forward = _conv_forward_numba
    conv_backward = _conv_backward_numba
    local_forward = _local_forward_numba
    local_backward = _local_backward_numba
else:
    gibbs_sweep = _gibbs_sweep_numpy
    fold_in = _fold_in_numpy
    conv_forward = _conv_forward_numpy
    conv_backward = _conv_backward_numpy
    local_forward = _local_forward_numpy
    local_backward = _local_backward_numpy

NUMBA_KERNELS = {
    "gibbs_sweep": _gibbs_sweep_numba,
    "fold_in": _fold_in_numba,
    "conv_forward": _conv_forward_numba,
    "conv_backward": _conv_backward_numba,
    "local_forward": _local_forward_numba,
    "local_backward": _local_backward_numba,
}
NUMPY_KERNELS = {
    "gibbs_sweep": _gibbs_sweep_numpy,
    "fold_in": _fold_in_numpy,
    "conv_forward": _conv_forward_numpy,
    "conv_backward": _conv_backward_numpy,
    "local_forward": _local_forward_numpy,
    "local_backward": _local_backward_numpy,
}

_warm = False


def warm_up() -> None:
    """Compile (or load from cache) the conv/local kernels on tiny inputs.

    Called before timed training so that JIT start-up is not billed to the
    first epoch of whichever model happens to run first.
    """
    global _warm
    if _warm or not USE_NUMBA:
        return
    x = np.zeros((1, 1, 2, 2))
    dy = np.zeros((1, 1, 1, 1))
    conv_backward(x, np.zeros((1, 1, 2, 2)), dy)
    conv_forward(x, np.zeros((1, 1, 2, 2)), np.zeros(1))
    local_backward(x, np.zeros((1, 1, 1, 2, 2)), dy)
    local_forward(x, np.zeros((1, 1, 1, 2, 2)), np.zeros((1, 1)))
    _warm = True
