"""Batched forward/backward kernels for the conv -> recurrent -> dense stack.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache and returns the input gradient
plus a dict of parameter gradients.  Arrays are float64 throughout.
"""

import numpy as np
from scipy.special import expit as sigmoid


def conv1d_forward(x, w, b):
    """Valid 1-D convolution over time.

    x: (B, k, W) zone channels x time; w: (K, k, F); b: (F,).
    Returns pre-activations of shape (B, W - K + 1, F).
    """
    K, k, F = w.shape
    xt = x.transpose(0, 2, 1)
    cols = np.lib.stride_tricks.sliding_window_view(xt, K, axis=1)  # (B, L, k, K)
    B, L = cols.shape[:2]
    cols = cols.transpose(0, 1, 3, 2).reshape(B, L, K * k)
    z = cols @ w.reshape(K * k, F) + b
    return z, (cols, x.shape, w.shape)


def conv1d_backward(dz, cache, w, need_dx=True):
    cols, x_shape, w_shape = cache
    K, k, F = w_shape
    B, L = dz.shape[:2]
    dw = (cols.reshape(B * L, K * k).T @ dz.reshape(B * L, F)).reshape(K, k, F)
    db = dz.sum(axis=(0, 1))
    if not need_dx:
        return None, {"w": dw, "b": db}
    dcols = (dz @ w.reshape(K * k, F).T).reshape(B, L, K, k)
    dxt = np.zeros((x_shape[0], x_shape[2], x_shape[1]))
    for j in range(K):
        dxt[:, j:j + L, :] += dcols[:, :, j, :]
    return dxt.transpose(0, 2, 1), {"w": dw, "b": db}


def relu_forward(z):
    return np.maximum(z, 0.0)


def relu_backward(da, z):
    return da * (z > 0)


def dropout_mask(shape, rate, rng):
    """Inverted-dropout mask: kept units are scaled by 1 / (1 - rate)."""
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def lstm_forward(x, wx, wh, b):
    """Unroll an LSTM over x (B, L, F); gates packed as [i, f, g, o].

    Returns the final hidden state (B, H).
    """
    B, L, _ = x.shape
    H = wh.shape[0]
    xw = x @ wx + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(L):
        a = xw[:, t] + h @ wh
        s = sigmoid(a)
        i, f, o = s[:, :H], s[:, H:2 * H], s[:, 3 * H:]
        g = np.tanh(a[:, 2 * H:3 * H])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        steps.append((h, c, i, f, g, o, tc))
        h = o * tc
        c = c_new
    return h, (x, steps)


def lstm_backward(dh, cache, wx, wh):
    x, steps = cache
    B, L, _ = x.shape
    H = wh.shape[0]
    dxw = np.empty((B, L, 4 * H))
    dwh = np.zeros_like(wh)
    dc = np.zeros((B, H))
    for t in reversed(range(L)):
        h_prev, c_prev, i, f, g, o, tc = steps[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        da = dxw[:, t]
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        da[:, 3 * H:] = do * o * (1.0 - o)
        dwh += h_prev.T @ da
        dh = da @ wh.T
        dc = dc * f
    flat = dxw.reshape(B * L, 4 * H)
    dwx = x.reshape(B * L, -1).T @ flat
    db = flat.sum(axis=0)
    dx = dxw @ wx.T
    return dx, {"wx": dwx, "wh": dwh, "b": db}


def gru_forward(x, wx, wh, b):
    """Unroll a GRU over x (B, L, F); gates packed as [z, r, n].

    n = tanh(x Wn + b_n + r * (h Un)),  h' = (1 - z) * n + z * h.
    """
    B, L, _ = x.shape
    H = wh.shape[0]
    xw = x @ wx + b
    h = np.zeros((B, H))
    steps = []
    for t in range(L):
        hw = h @ wh
        s = sigmoid(xw[:, t, :2 * H] + hw[:, :2 * H])
        z, r = s[:, :H], s[:, H:]
        hn = hw[:, 2 * H:]
        n = np.tanh(xw[:, t, 2 * H:] + r * hn)
        steps.append((h, z, r, n, hn))
        h = (1.0 - z) * n + z * h
    return h, (x, steps)


def gru_backward(dh, cache, wx, wh):
    x, steps = cache
    B, L, _ = x.shape
    H = wh.shape[0]
    dxw = np.empty((B, L, 3 * H))
    dhw = np.empty((B, 3 * H))
    dwh = np.zeros_like(wh)
    for t in reversed(range(L)):
        h_prev, z, r, n, hn = steps[t]
        dan = dh * (1.0 - z) * (1.0 - n * n)
        daz = dh * (h_prev - n) * z * (1.0 - z)
        dar = dan * hn * r * (1.0 - r)
        da = dxw[:, t]
        da[:, :H] = daz
        da[:, H:2 * H] = dar
        da[:, 2 * H:] = dan
        dhw[:, :2 * H] = da[:, :2 * H]
        dhw[:, 2 * H:] = dan * r
        dwh += h_prev.T @ dhw
        dh = dh * z + dhw @ wh.T
    flat = dxw.reshape(B * L, 3 * H)
    dwx = x.reshape(B * L, -1).T @ flat
    db = flat.sum(axis=0)
    dx = dxw @ wx.T
    return dx, {"wx": dwx, "wh": dwh, "b": db}


RECURRENT = {
    "LSTM": (4, lstm_forward, lstm_backward),
    "GRU": (3, gru_forward, gru_backward),
}
