"""Hot numeric kernels: the recurrent part of batched LSTM forward and
backward (full BPTT).

The input-side work is hoisted by the callers into single large matmuls;
what remains here is the time loop: one recurrent matmul plus the gate
math per step. Each kernel has two registered forms (see backend.pair):
a vectorized numpy implementation that reuses preallocated scratch through
out= arguments, and a loop form that numba compiles to allocation-free
fused code. Both are dtype generic -- model code runs them in float32, the
gradient checker in float64 -- so only integer literals appear in the math
(numba widens float literals mixed with float32 arrays to float64).

Array layout is time-major. Gate caches are kept as separate contiguous
[T, B, H] arrays in the fixed order (input, forget, cell, output); the
backward pass reassembles pre-activation gradients into [T, B, 4H] blocks
in that same order, which is also the serialization order of the weights.
"""

from __future__ import annotations

import numpy as np

from .backend import pair

# ---------------------------------------------------------------------------
# Forward recurrence
#
# pre[t] = x[t] @ W.T + b is precomputed; the kernel adds h_{t-1} @ U.T,
# applies the gates, and records everything backward needs:
# (gi, gf, gg, go, cells, tanhc, hidden), each [T, B, H].


def _lstm_fwd_np(pre, Ut, h0, c0):
    T, B, four_h = pre.shape
    H = four_h // 4
    dt = pre.dtype
    gi = np.empty((T, B, H), dt)
    gf = np.empty((T, B, H), dt)
    gg = np.empty((T, B, H), dt)
    go = np.empty((T, B, H), dt)
    cells = np.empty((T, B, H), dt)
    tanhc = np.empty((T, B, H), dt)
    hidden = np.empty((T, B, H), dt)
    a = np.empty((B, four_h), dt)
    s = np.empty((B, H), dt)
    h = np.ascontiguousarray(h0)
    c = c0
    for t in range(T):
        np.dot(h, Ut, out=a)
        a += pre[t]
        for block, dst in ((0, gi[t]), (1, gf[t]), (3, go[t])):
            np.negative(a[:, block * H : (block + 1) * H], out=s)
            np.exp(s, out=s)
            s += 1
            np.reciprocal(s, out=dst)
        np.tanh(a[:, 2 * H : 3 * H], out=gg[t])
        np.multiply(gf[t], c, out=cells[t])
        np.multiply(gi[t], gg[t], out=s)
        cells[t] += s
        np.tanh(cells[t], out=tanhc[t])
        np.multiply(go[t], tanhc[t], out=hidden[t])
        h = hidden[t]
        c = cells[t]
    return gi, gf, gg, go, cells, tanhc, hidden


def _lstm_fwd_loop(pre, Ut, h0, c0):
    T, B, four_h = pre.shape
    H = four_h // 4
    dt = pre.dtype
    gi = np.empty((T, B, H), dt)
    gf = np.empty((T, B, H), dt)
    gg = np.empty((T, B, H), dt)
    go = np.empty((T, B, H), dt)
    cells = np.empty((T, B, H), dt)
    tanhc = np.empty((T, B, H), dt)
    hidden = np.empty((T, B, H), dt)
    h = h0.copy()
    for t in range(T):
        a = np.dot(h, Ut)
        cprev = cells[t - 1] if t > 0 else c0
        for bi in range(B):
            for j in range(H):
                vi = 1 / (1 + np.exp(-(a[bi, j] + pre[t, bi, j])))
                vf = 1 / (1 + np.exp(-(a[bi, H + j] + pre[t, bi, H + j])))
                vg = np.tanh(a[bi, 2 * H + j] + pre[t, bi, 2 * H + j])
                vo = 1 / (1 + np.exp(-(a[bi, 3 * H + j] + pre[t, bi, 3 * H + j])))
                c = vf * cprev[bi, j] + vi * vg
                tc = np.tanh(c)
                gi[t, bi, j] = vi
                gf[t, bi, j] = vf
                gg[t, bi, j] = vg
                go[t, bi, j] = vo
                cells[t, bi, j] = c
                tanhc[t, bi, j] = tc
                hidden[t, bi, j] = vo * tc
        h = hidden[t]
    return gi, gf, gg, go, cells, tanhc, hidden


lstm_fwd_recurrence = pair(_lstm_fwd_np, _lstm_fwd_loop)


# ---------------------------------------------------------------------------
# Backward recurrence
#
# Produces da [T, B, 4H], the loss gradient at the gate pre-activations,
# plus dh0/dc0. The caller turns da into dW/dU/db/dx with large matmuls.


def _lstm_bwd_np(U, gi, gf, gg, go, cells, tanhc, hidden, h0, c0, dhseq):
    T, B, H = gi.shape
    dt = gi.dtype
    da = np.empty((T, B, 4 * H), dt)
    dh = np.zeros((B, H), dt)
    dc = np.zeros((B, H), dt)
    dht = np.empty((B, H), dt)
    s1 = np.empty((B, H), dt)
    s2 = np.empty((B, H), dt)
    for t in range(T - 1, -1, -1):
        c_prev = cells[t - 1] if t > 0 else c0
        np.add(dhseq[t], dh, out=dht)
        np.multiply(dht, go[t], out=s1)  # dc/dtanh path
        dc += s1
        s1 *= tanhc[t]
        s1 *= tanhc[t]
        dc -= s1
        np.multiply(dc, gg[t], out=s1)  # input gate
        s1 *= gi[t]
        np.multiply(s1, gi[t], out=s2)
        s1 -= s2
        da[t, :, 0:H] = s1
        np.multiply(dc, c_prev, out=s1)  # forget gate
        s1 *= gf[t]
        np.multiply(s1, gf[t], out=s2)
        s1 -= s2
        da[t, :, H : 2 * H] = s1
        np.multiply(dc, gi[t], out=s1)  # cell candidate
        np.multiply(s1, gg[t], out=s2)
        s2 *= gg[t]
        s1 -= s2
        da[t, :, 2 * H : 3 * H] = s1
        np.multiply(dht, tanhc[t], out=s1)  # output gate
        s1 *= go[t]
        np.multiply(s1, go[t], out=s2)
        s1 -= s2
        da[t, :, 3 * H : 4 * H] = s1
        np.dot(da[t], U, out=dh)
        dc *= gf[t]
    return da, dh, dc


def _lstm_bwd_loop(U, gi, gf, gg, go, cells, tanhc, hidden, h0, c0, dhseq):
    T, B, H = gi.shape
    dt = gi.dtype
    da = np.empty((T, B, 4 * H), dt)
    dh = np.zeros((B, H), dt)
    dc = np.zeros((B, H), dt)
    for t in range(T - 1, -1, -1):
        cprev = cells[t - 1] if t > 0 else c0
        for bi in range(B):
            for j in range(H):
                vi = gi[t, bi, j]
                vf = gf[t, bi, j]
                vg = gg[t, bi, j]
                vo = go[t, bi, j]
                tc = tanhc[t, bi, j]
                dht = dhseq[t, bi, j] + dh[bi, j]
                dco = dht * vo
                dct = dc[bi, j] + dco - dco * tc * tc
                di = dct * vg
                df = dct * cprev[bi, j]
                dg = dct * vi
                do = dht * tc
                da[t, bi, j] = di * vi - di * vi * vi
                da[t, bi, H + j] = df * vf - df * vf * vf
                da[t, bi, 2 * H + j] = dg - dg * vg * vg
                da[t, bi, 3 * H + j] = do * vo - do * vo * vo
                dc[bi, j] = dct * vf
        dh = np.dot(da[t], U)
    return da, dh, dc


lstm_bwd_recurrence = pair(_lstm_bwd_np, _lstm_bwd_loop)
