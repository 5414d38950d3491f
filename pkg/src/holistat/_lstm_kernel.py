"""Compiled single-sequence LSTM forward/backward.

Same arithmetic as the numpy path in :mod:`holistat.predictor` (gate order
i, f, o, g), written as explicit loops so numba can compile it.  The numpy
path is used when numba is unavailable.
"""

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

AVAILABLE = njit is not None


def _sig(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


def _run(Wx, Wh, b, X, hs, cs, gates):
    T = X.shape[0]
    I = X.shape[1]
    H = Wh.shape[0]
    G = 4 * H
    a = np.empty(G)
    for t in range(T):
        for k in range(G):
            a[k] = b[k]
        for i in range(I):
            xi = X[t, i]
            for k in range(G):
                a[k] += xi * Wx[i, k]
        for j in range(H):
            hj = hs[t, j]
            for k in range(G):
                a[k] += hj * Wh[j, k]
        for k in range(3 * H):
            gates[t, k] = _sig(a[k])
        for k in range(3 * H, G):
            gates[t, k] = math.tanh(a[k])
        for j in range(H):
            c = gates[t, H + j] * cs[t, j] + gates[t, j] * gates[t, 3 * H + j]
            cs[t + 1, j] = c
            hs[t + 1, j] = gates[t, 2 * H + j] * math.tanh(c)


def _head(Wy, by, h, y):
    H = Wy.shape[0]
    O = Wy.shape[1]
    for o in range(O):
        acc = by[o]
        for j in range(H):
            acc += h[j] * Wy[j, o]
        y[o] = acc


def forward(Wx, Wh, b, Wy, by, X, y):
    T = X.shape[0]
    H = Wh.shape[0]
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.empty((T, 4 * H))
    _run(Wx, Wh, b, X, hs, cs, gates)
    _head(Wy, by, hs[T], y)


def forward_backward(Wx, Wh, b, Wy, by, X, target, delta, scale, gWx, gWh, gb, gWy, gby):
    """Accumulate ``scale`` x d(sum Huber)/d(params) into the g* arrays; return the summed loss."""
    T = X.shape[0]
    I = X.shape[1]
    H = Wh.shape[0]
    O = Wy.shape[1]
    G = 4 * H
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.empty((T, G))
    _run(Wx, Wh, b, X, hs, cs, gates)
    y = np.empty(O)
    _head(Wy, by, hs[T], y)
    loss = 0.0
    dy = np.empty(O)
    for o in range(O):
        e = y[o] - target[o]
        ae = abs(e)
        if ae <= delta:
            loss += 0.5 * e * e
            dy[o] = e * scale
        else:
            loss += delta * (ae - 0.5 * delta)
            dy[o] = (delta if e > 0 else -delta) * scale
    dh = np.zeros(H)
    for j in range(H):
        acc = 0.0
        for o in range(O):
            gWy[j, o] += hs[T, j] * dy[o]
            acc += dy[o] * Wy[j, o]
        dh[j] = acc
    for o in range(O):
        gby[o] += dy[o]
    dc = np.zeros(H)
    da = np.empty(G)
    for t in range(T - 1, -1, -1):
        for j in range(H):
            ig = gates[t, j]
            fg = gates[t, H + j]
            og = gates[t, 2 * H + j]
            cg = gates[t, 3 * H + j]
            tc = math.tanh(cs[t + 1, j])
            dcj = dc[j] + dh[j] * og * (1.0 - tc * tc)
            da[j] = dcj * cg * ig * (1.0 - ig)
            da[H + j] = dcj * cs[t, j] * fg * (1.0 - fg)
            da[2 * H + j] = dh[j] * tc * og * (1.0 - og)
            da[3 * H + j] = dcj * ig * (1.0 - cg * cg)
            dc[j] = dcj * fg
        for k in range(G):
            gb[k] += da[k]
            for i in range(I):
                gWx[i, k] += X[t, i] * da[k]
            for j in range(H):
                gWh[j, k] += hs[t, j] * da[k]
        for j in range(H):
            acc = 0.0
            for k in range(G):
                acc += da[k] * Wh[j, k]
            dh[j] = acc
    return loss


if AVAILABLE:
    _sig = njit(cache=True, inline="always")(_sig)
    _run = njit(cache=True)(_run)
    _head = njit(cache=True)(_head)
    forward = njit(cache=True)(forward)
    forward_backward = njit(cache=True)(forward_backward)
