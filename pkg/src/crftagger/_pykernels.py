"""Reference numpy implementations of the hot loops.

``_ckernels.pyx`` mirrors every function here with the same signature and
semantics; :mod:`crftagger.kernels` picks one at import time.

Shapes: ``emis`` is (n, T); ``trans`` is (T + 1, T) with the start row last.
"""
import numpy as np


def _lse_cols(m):
    mx = m.max(axis=0)
    return mx + np.log(np.exp(m - mx).sum(axis=0))


def crf_forward(emis, trans):
    n, T = emis.shape
    A = trans[:T]
    alpha = np.empty((n, T))
    alpha[0] = trans[T] + emis[0]
    for t in range(1, n):
        alpha[t] = emis[t] + _lse_cols(alpha[t - 1][:, None] + A)
    return alpha


def crf_backward(emis, trans):
    n, T = emis.shape
    A = trans[:T]
    beta = np.empty((n, T))
    beta[n - 1] = 0.0
    for t in range(n - 2, -1, -1):
        m = A + (emis[t + 1] + beta[t + 1])[None, :]
        mx = m.max(axis=1)
        beta[t] = mx + np.log(np.exp(m - mx[:, None]).sum(axis=1))
    return beta


def crf_log_partition(emis, trans):
    a = crf_forward(emis, trans)[-1]
    mx = a.max()
    return float(mx + np.log(np.exp(a - mx).sum()))


def crf_expectations(emis, trans):
    """log Z, node marginals (n, T) and expected transition counts (T + 1, T)."""
    n, T = emis.shape
    alpha = crf_forward(emis, trans)
    beta = crf_backward(emis, trans)
    last = alpha[-1]
    mx = last.max()
    log_z = float(mx + np.log(np.exp(last - mx).sum()))
    marg = np.exp(alpha + beta - log_z)
    expected = np.zeros((T + 1, T))
    expected[T] = marg[0]
    A = trans[:T]
    for t in range(1, n):
        expected[:T] += np.exp(alpha[t - 1][:, None] + A + (emis[t] + beta[t])[None, :] - log_z)
    return log_z, marg, expected


def crf_viterbi(emis, trans):
    """Best path and its score; ties go to the lower tag index."""
    n, T = emis.shape
    A = trans[:T]
    delta = trans[T] + emis[0]
    back = np.zeros((n, T), dtype=np.intp)
    for t in range(1, n):
        cand = delta[:, None] + A
        back[t] = cand.argmax(axis=0)
        delta = cand[back[t], np.arange(T)] + emis[t]
    path = np.empty(n, dtype=np.intp)
    path[-1] = int(delta.argmax())
    score = float(delta[path[-1]])
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, score


def charcnn_forward(table, weight, bias, padded, window):
    """Returns (y, windows, scores, argmax) for one padded character sequence."""
    cols = table[:, padded].T  # (M + k - 1, d_chr)
    M = padded.shape[0] - window + 1
    windows = np.concatenate([cols[s:s + M] for s in range(window)], axis=1)
    scores = windows @ weight.T + bias
    argmax = scores.argmax(axis=0)
    y = scores[argmax, np.arange(scores.shape[1])]
    return y, windows, scores, argmax


def charcnn_backward(weight, windows, argmax, grad_y):
    """(dW, db, dWindows) routing grad_y through each unit's winning window."""
    dW = grad_y[:, None] * windows[argmax]
    dQ = np.zeros_like(windows)
    np.add.at(dQ, argmax, grad_y[:, None] * weight)
    return dW, grad_y.copy(), dQ


def charcnn_sentence_forward(table, weight, bias, padded, starts, window):
    """Character CNN over every token of a sentence at once.

    ``padded`` concatenates the padded id sequences of all tokens; token t
    occupies ``padded[starts[t]:starts[t + 1]]``.  Window rows are numbered
    consecutively across tokens, and ``argmax[t, j]`` is the global row of
    the window that wins unit j for token t.
    """
    n = starts.shape[0] - 1
    ys, wins, argmax = [], [], np.empty((n, weight.shape[0]), dtype=np.intp)
    row = 0
    for t in range(n):
        y, w, _, am = charcnn_forward(table, weight, bias, padded[starts[t]:starts[t + 1]], window)
        ys.append(y)
        wins.append(w)
        argmax[t] = am + row
        row += w.shape[0]
    return np.array(ys), np.concatenate(wins), argmax


def charcnn_sentence_backward(weight, windows, argmax, grad_y):
    """(dW, db, dWindows) for :func:`charcnn_sentence_forward`."""
    dQ = np.zeros_like(windows)
    dW = np.zeros_like(weight)
    for t in range(argmax.shape[0]):
        dW += grad_y[t][:, None] * windows[argmax[t]]
        np.add.at(dQ, argmax[t], grad_y[t][:, None] * weight)
    return dW, grad_y.sum(axis=0), dQ


def _sigmoid(x):
    # stable for any finite x: never exponentiates a positive number
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def rnn_scan_forward(pre, W, h0):
    """h[t + 1] = tanh(pre[t] + W h[t]); returns h of shape (n + 1, H)."""
    n, H = pre.shape
    h = np.empty((n + 1, H))
    h[0] = h0
    for t in range(n):
        h[t + 1] = np.tanh(pre[t] + W @ h[t])
    return h


def rnn_scan_backward(W, h, dH):
    """Gradient w.r.t. the pre-activations (n, H) and the initial state."""
    n, H = dH.shape
    dA = np.empty((n, H))
    dh = np.zeros(H)
    for t in range(n - 1, -1, -1):
        dh = dh + dH[t]
        da = dh * (1.0 - h[t + 1] ** 2)
        dA[t] = da
        dh = W.T @ da
    return dA, dh


def lstm_scan_forward(pre, W, h0, c0):
    """LSTM recurrence over input projections ``pre`` (n, 4H), gate rows i, f, o, g.

    Returns h, c of shape (n + 1, H) and the gate activations (n, 4H).
    """
    n = pre.shape[0]
    H = W.shape[1]
    h = np.empty((n + 1, H))
    c = np.empty((n + 1, H))
    gates = np.empty((n, 4 * H))
    h[0], c[0] = h0, c0
    for t in range(n):
        a = pre[t] + W @ h[t]
        ifo = _sigmoid(a[:3 * H])
        g = np.tanh(a[3 * H:])
        c[t + 1] = ifo[H:2 * H] * c[t] + ifo[:H] * g
        h[t + 1] = ifo[2 * H:] * np.tanh(c[t + 1])
        gates[t, :3 * H] = ifo
        gates[t, 3 * H:] = g
    return h, c, gates


def lstm_scan_backward(W, h, c, gates, dH):
    """Gradient w.r.t. the pre-activations (n, 4H), h0 and c0."""
    n, H = dH.shape
    dA = np.empty((n, 4 * H))
    dh = np.zeros(H)
    dc = np.zeros(H)
    for t in range(n - 1, -1, -1):
        i, f, o, g = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
        tc = np.tanh(c[t + 1])
        dh = dh + dH[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        da = dA[t]
        da[:H] = dc * g * i * (1.0 - i)
        da[H:2 * H] = dc * c[t] * f * (1.0 - f)
        da[2 * H:3 * H] = dh * tc * o * (1.0 - o)
        da[3 * H:] = dc * i * (1.0 - g * g)
        dc = dc * f
        dh = W.T @ da
    return dA, dh, dc


def gru_scan_forward(pre, W, h0):
    """GRU recurrence, gate rows z, r, candidate; the reset gate scales W_h h.

    Returns h (n + 1, H), gates z|r (n, 2H), candidates (n, H) and W_h h (n, H).
    """
    n = pre.shape[0]
    H = W.shape[1]
    h = np.empty((n + 1, H))
    h[0] = h0
    zr = np.empty((n, 2 * H))
    cand = np.empty((n, H))
    uh = np.empty((n, H))
    for t in range(n):
        wh = W @ h[t]
        zr[t] = _sigmoid(pre[t, :2 * H] + wh[:2 * H])
        uh[t] = wh[2 * H:]
        cand[t] = np.tanh(pre[t, 2 * H:] + uh[t] * zr[t, H:])
        z = zr[t, :H]
        h[t + 1] = z * cand[t] + (1.0 - z) * h[t]
    return h, zr, cand, uh


def gru_scan_backward(W, h, zr, cand, uh, dH):
    """Gradients w.r.t. the input pre-activations (n, 3H), W h_prev (n, 3H) and h0."""
    n, H = dH.shape
    dA = np.empty((n, 3 * H))
    dWh = np.empty((n, 3 * H))
    dh = np.zeros(H)
    for t in range(n - 1, -1, -1):
        z, r, ht = zr[t, :H], zr[t, H:], cand[t]
        dh = dh + dH[t]
        dz = dh * (ht - h[t])
        dah = dh * z * (1.0 - ht * ht)
        dA[t, :H] = dz * z * (1.0 - z)
        dA[t, H:2 * H] = dah * uh[t] * r * (1.0 - r)
        dA[t, 2 * H:] = dah
        dWh[t, :2 * H] = dA[t, :2 * H]
        dWh[t, 2 * H:] = dah * r
        dh = dh * (1.0 - z) + W.T @ dWh[t]
    return dA, dWh, dh
