# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the functions in ``_pykernels``.

Same signatures, same tie-breaking (lowest index wins), float64 throughout.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh, fabs, INFINITY
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef inline double _lse2(double[:] v, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = -INFINITY, s = 0.0
    for i in range(n):
        if v[i] > m:
            m = v[i]
    if m == -INFINITY:
        return m
    for i in range(n):
        s += exp(v[i] - m)
    return m + log(s)


cdef void _forward(const double[:, ::1] emis, const double[:, ::1] trans, double[:, ::1] alpha,
                   double[:] buf) noexcept nogil:
    cdef Py_ssize_t n = emis.shape[0], T = emis.shape[1], t, j, k
    for j in range(T):
        alpha[0, j] = trans[T, j] + emis[0, j]
    for t in range(1, n):
        for j in range(T):
            for k in range(T):
                buf[k] = alpha[t - 1, k] + trans[k, j]
            alpha[t, j] = emis[t, j] + _lse2(buf, T)


cdef void _backward(const double[:, ::1] emis, const double[:, ::1] trans, double[:, ::1] beta,
                    double[:] buf) noexcept nogil:
    cdef Py_ssize_t n = emis.shape[0], T = emis.shape[1], t, j, k
    for j in range(T):
        beta[n - 1, j] = 0.0
    for t in range(n - 2, -1, -1):
        for k in range(T):
            for j in range(T):
                buf[j] = trans[k, j] + emis[t + 1, j] + beta[t + 1, j]
            beta[t, k] = _lse2(buf, T)


def crf_forward(const double[:, ::1] emis, const double[:, ::1] trans):
    cdef Py_ssize_t n = emis.shape[0], T = emis.shape[1]
    alpha = np.empty((n, T))
    buf = np.empty(T)
    _forward(emis, trans, alpha, buf)
    return alpha


def crf_backward(const double[:, ::1] emis, const double[:, ::1] trans):
    cdef Py_ssize_t n = emis.shape[0], T = emis.shape[1]
    beta = np.empty((n, T))
    buf = np.empty(T)
    _backward(emis, trans, beta, buf)
    return beta


def crf_log_partition(const double[:, ::1] emis, const double[:, ::1] trans):
    cdef Py_ssize_t n = emis.shape[0], T = emis.shape[1]
    cdef double[:, ::1] alpha = np.empty((n, T))
    cdef double[:] buf = np.empty(T)
    _forward(emis, trans, alpha, buf)
    return _lse2(alpha[n - 1], T)


def crf_expectations(const double[:, ::1] emis, const double[:, ::1] trans):
    cdef Py_ssize_t n = emis.shape[0], T = emis.shape[1], t, j, k
    alpha_arr = np.empty((n, T))
    beta_arr = np.empty((n, T))
    marg_arr = np.empty((n, T))
    exp_arr = np.zeros((T + 1, T))
    cdef double[:, ::1] alpha = alpha_arr, beta = beta_arr, marg = marg_arr, expected = exp_arr
    cdef double[:] buf = np.empty(T)
    cdef double log_z, a
    with nogil:
        _forward(emis, trans, alpha, buf)
        _backward(emis, trans, beta, buf)
        log_z = _lse2(alpha[n - 1], T)
        for t in range(n):
            for j in range(T):
                marg[t, j] = exp(alpha[t, j] + beta[t, j] - log_z)
        for j in range(T):
            expected[T, j] = marg[0, j]
        for t in range(1, n):
            for k in range(T):
                a = alpha[t - 1, k] - log_z
                for j in range(T):
                    expected[k, j] += exp(a + trans[k, j] + emis[t, j] + beta[t, j])
    return float(log_z), marg_arr, exp_arr


def crf_viterbi(const double[:, ::1] emis, const double[:, ::1] trans):
    cdef Py_ssize_t n = emis.shape[0], T = emis.shape[1], t, j, k, best_k
    path_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[:] path = path_arr
    cdef Py_ssize_t[:, ::1] back = np.zeros((n, T), dtype=np.intp)
    cdef double[:] delta = np.empty(T), nxt = np.empty(T)
    cdef double best, cand
    with nogil:
        for j in range(T):
            delta[j] = trans[T, j] + emis[0, j]
        for t in range(1, n):
            for j in range(T):
                best_k = 0
                best = delta[0] + trans[0, j]
                for k in range(1, T):
                    cand = delta[k] + trans[k, j]
                    if cand > best:
                        best = cand
                        best_k = k
                back[t, j] = best_k
                nxt[j] = best + emis[t, j]
            delta[:] = nxt
        best_k = 0
        for j in range(1, T):
            if delta[j] > delta[best_k]:
                best_k = j
        path[n - 1] = best_k
        best = delta[best_k]
        for t in range(n - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr, float(best)


def charcnn_forward(const double[:, ::1] table, const double[:, ::1] weight, const double[::1] bias,
                    const Py_ssize_t[::1] padded, Py_ssize_t window):
    cdef Py_ssize_t d = table.shape[0], M = padded.shape[0] - window + 1
    cdef Py_ssize_t D = weight.shape[0], W = weight.shape[1], m, s, i, j, c
    win_arr = np.empty((M, W))
    y_arr = np.empty(D)
    am_arr = np.zeros(D, dtype=np.intp)
    cdef double[:, ::1] windows = win_arr
    cdef const double[:, ::1] scores
    cdef double[::1] y = y_arr
    cdef Py_ssize_t[::1] argmax = am_arr
    with nogil:
        for m in range(M):
            for s in range(window):
                c = padded[m + s]
                for i in range(d):
                    windows[m, s * d + i] = table[i, c]
    sc_arr = win_arr @ np.asarray(weight).T + np.asarray(bias)
    scores = sc_arr
    with nogil:
        for j in range(D):
            argmax[j] = 0
            y[j] = scores[0, j]
            for m in range(1, M):
                if scores[m, j] > y[j]:
                    y[j] = scores[m, j]
                    argmax[j] = m
    return y_arr, win_arr, sc_arr, am_arr


def charcnn_backward(const double[:, ::1] weight, const double[:, ::1] windows, const Py_ssize_t[::1] argmax,
                     const double[::1] grad_y):
    cdef Py_ssize_t D = weight.shape[0], W = weight.shape[1], j, i, m
    dW_arr = np.empty((D, W))
    dQ_arr = np.zeros((windows.shape[0], W))
    cdef double[:, ::1] dW = dW_arr, dQ = dQ_arr
    cdef double g
    with nogil:
        for j in range(D):
            m = argmax[j]
            g = grad_y[j]
            for i in range(W):
                dW[j, i] = g * windows[m, i]
                dQ[m, i] += g * weight[j, i]
    return dW_arr, np.array(grad_y, copy=True), dQ_arr


def charcnn_sentence_forward(const double[:, ::1] table, const double[:, ::1] weight, const double[::1] bias,
                             const Py_ssize_t[::1] padded, const Py_ssize_t[::1] starts, Py_ssize_t window):
    cdef Py_ssize_t d = table.shape[0], D = weight.shape[0], W = weight.shape[1]
    cdef Py_ssize_t n = starts.shape[0] - 1, rows = padded.shape[0] - n * (window - 1)
    cdef Py_ssize_t t, m, s, i, j, c, row, first, M
    win_arr = np.empty((rows, W))
    y_arr = np.empty((n, D))
    am_arr = np.zeros((n, D), dtype=np.intp)
    cdef double[:, ::1] windows = win_arr, y = y_arr
    cdef const double[:, ::1] scores
    cdef Py_ssize_t[:, ::1] argmax = am_arr
    with nogil:
        row = 0
        for t in range(n):
            for m in range(starts[t + 1] - starts[t] - window + 1):
                for s in range(window):
                    c = padded[starts[t] + m + s]
                    for i in range(d):
                        windows[row, s * d + i] = table[i, c]
                row += 1
    # the score matrix is a plain GEMM; numpy hands it to BLAS
    scores = np.ascontiguousarray(win_arr @ np.asarray(weight).T + np.asarray(bias))
    with nogil:
        first = 0
        for t in range(n):
            M = starts[t + 1] - starts[t] - window + 1
            for j in range(D):
                argmax[t, j] = first
                y[t, j] = scores[first, j]
                for m in range(first + 1, first + M):
                    if scores[m, j] > y[t, j]:
                        y[t, j] = scores[m, j]
                        argmax[t, j] = m
            first += M
    return y_arr, win_arr, am_arr


def charcnn_sentence_backward(const double[:, ::1] weight, const double[:, ::1] windows,
                              const Py_ssize_t[:, ::1] argmax, const double[:, ::1] grad_y):
    cdef Py_ssize_t n = argmax.shape[0], D = weight.shape[0], W = weight.shape[1], t, j, i, m
    dW_arr = np.zeros((D, W))
    db_arr = np.zeros(D)
    dQ_arr = np.zeros((windows.shape[0], W))
    cdef double[:, ::1] dW = dW_arr, dQ = dQ_arr
    cdef double[::1] db = db_arr
    cdef double g
    with nogil:
        for t in range(n):
            for j in range(D):
                m = argmax[t, j]
                g = grad_y[t, j]
                db[j] += g
                for i in range(W):
                    dW[j, i] += g * windows[m, i]
                    dQ[m, i] += g * weight[j, i]
    return dW_arr, db_arr, dQ_arr


cdef inline double _sig(double x) noexcept nogil:
    cdef double e = exp(-fabs(x))
    if x >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


cdef inline void _gemv(const double[:, ::1] W, const double[:, ::1] h, Py_ssize_t t,
                       double[::1] out) noexcept nogil:
    # out = W @ h[t].  A C-ordered (G, H) matrix is BLAS's column-major (H, G).
    cdef int H = <int>W.shape[1], G = <int>W.shape[0], one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef char tr = b'T'
    dgemv(&tr, &H, &G, &alpha, <double*>&W[0, 0], &H, <double*>&h[t, 0], &one, &beta, &out[0], &one)


cdef inline void _gemv_t(const double[:, ::1] W, const double[:, ::1] v, Py_ssize_t t,
                         double[::1] out) noexcept nogil:
    # out = W.T @ v[t]
    cdef int H = <int>W.shape[1], G = <int>W.shape[0], one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef char tr = b'N'
    dgemv(&tr, &H, &G, &alpha, <double*>&W[0, 0], &H, <double*>&v[t, 0], &one, &beta, &out[0], &one)


def rnn_scan_forward(const double[:, ::1] pre, const double[:, ::1] W, const double[::1] h0):
    cdef Py_ssize_t n = pre.shape[0], H = pre.shape[1], t, k
    h_arr = np.empty((n + 1, H))
    cdef double[:, ::1] h = h_arr
    cdef double[::1] wh = np.empty(H)
    with nogil:
        for k in range(H):
            h[0, k] = h0[k]
        for t in range(n):
            _gemv(W, h, t, wh)
            for k in range(H):
                h[t + 1, k] = tanh(pre[t, k] + wh[k])
    return h_arr


def rnn_scan_backward(const double[:, ::1] W, const double[:, ::1] h, const double[:, ::1] dH):
    cdef Py_ssize_t n = dH.shape[0], H = dH.shape[1], t, k
    dA_arr = np.empty((n, H))
    dh_arr = np.zeros(H)
    cdef double[:, ::1] dA = dA_arr
    cdef double[::1] dh = dh_arr
    with nogil:
        for t in range(n - 1, -1, -1):
            for k in range(H):
                dA[t, k] = (dh[k] + dH[t, k]) * (1.0 - h[t + 1, k] * h[t + 1, k])
            _gemv_t(W, dA, t, dh)
    return dA_arr, dh_arr


def lstm_scan_forward(const double[:, ::1] pre, const double[:, ::1] W, const double[::1] h0,
                      const double[::1] c0):
    cdef Py_ssize_t n = pre.shape[0], H = W.shape[1], t, k
    h_arr = np.empty((n + 1, H))
    c_arr = np.empty((n + 1, H))
    g_arr = np.empty((n, 4 * H))
    cdef double[:, ::1] h = h_arr, c = c_arr, gates = g_arr
    cdef double[::1] a = np.empty(4 * H)
    cdef double i_, f_, o_, g_
    with nogil:
        for k in range(H):
            h[0, k] = h0[k]
            c[0, k] = c0[k]
        for t in range(n):
            _gemv(W, h, t, a)
            for k in range(H):
                i_ = _sig(pre[t, k] + a[k])
                f_ = _sig(pre[t, H + k] + a[H + k])
                o_ = _sig(pre[t, 2 * H + k] + a[2 * H + k])
                g_ = tanh(pre[t, 3 * H + k] + a[3 * H + k])
                c[t + 1, k] = f_ * c[t, k] + i_ * g_
                h[t + 1, k] = o_ * tanh(c[t + 1, k])
                gates[t, k] = i_
                gates[t, H + k] = f_
                gates[t, 2 * H + k] = o_
                gates[t, 3 * H + k] = g_
    return h_arr, c_arr, g_arr


def lstm_scan_backward(const double[:, ::1] W, const double[:, ::1] h, const double[:, ::1] c,
                       const double[:, ::1] gates, const double[:, ::1] dH):
    cdef Py_ssize_t n = dH.shape[0], H = dH.shape[1], t, k
    dA_arr = np.empty((n, 4 * H))
    dh_arr = np.zeros(H)
    dc_arr = np.zeros(H)
    cdef double[:, ::1] dA = dA_arr
    cdef double[::1] dh = dh_arr, dc = dc_arr
    cdef double i_, f_, o_, g_, tc, dhk, dck
    with nogil:
        for t in range(n - 1, -1, -1):
            for k in range(H):
                i_ = gates[t, k]
                f_ = gates[t, H + k]
                o_ = gates[t, 2 * H + k]
                g_ = gates[t, 3 * H + k]
                tc = tanh(c[t + 1, k])
                dhk = dh[k] + dH[t, k]
                dck = dc[k] + dhk * o_ * (1.0 - tc * tc)
                dA[t, k] = dck * g_ * i_ * (1.0 - i_)
                dA[t, H + k] = dck * c[t, k] * f_ * (1.0 - f_)
                dA[t, 2 * H + k] = dhk * tc * o_ * (1.0 - o_)
                dA[t, 3 * H + k] = dck * i_ * (1.0 - g_ * g_)
                dc[k] = dck * f_
            _gemv_t(W, dA, t, dh)
    return dA_arr, dh_arr, dc_arr


def gru_scan_forward(const double[:, ::1] pre, const double[:, ::1] W, const double[::1] h0):
    cdef Py_ssize_t n = pre.shape[0], H = W.shape[1], t, k
    h_arr = np.empty((n + 1, H))
    zr_arr = np.empty((n, 2 * H))
    cand_arr = np.empty((n, H))
    uh_arr = np.empty((n, H))
    cdef double[:, ::1] h = h_arr, zr = zr_arr, cand = cand_arr, uh = uh_arr
    cdef double[::1] wh = np.empty(3 * H)
    cdef double z, r, ht
    with nogil:
        for k in range(H):
            h[0, k] = h0[k]
        for t in range(n):
            _gemv(W, h, t, wh)
            for k in range(H):
                z = _sig(pre[t, k] + wh[k])
                r = _sig(pre[t, H + k] + wh[H + k])
                uh[t, k] = wh[2 * H + k]
                ht = tanh(pre[t, 2 * H + k] + wh[2 * H + k] * r)
                zr[t, k] = z
                zr[t, H + k] = r
                cand[t, k] = ht
                h[t + 1, k] = z * ht + (1.0 - z) * h[t, k]
    return h_arr, zr_arr, cand_arr, uh_arr


def gru_scan_backward(const double[:, ::1] W, const double[:, ::1] h, const double[:, ::1] zr,
                      const double[:, ::1] cand, const double[:, ::1] uh, const double[:, ::1] dH):
    cdef Py_ssize_t n = dH.shape[0], H = dH.shape[1], t, k
    dA_arr = np.empty((n, 3 * H))
    dWh_arr = np.empty((n, 3 * H))
    dh_arr = np.zeros(H)
    cdef double[:, ::1] dA = dA_arr, dWh = dWh_arr
    cdef double[::1] dh = dh_arr, rec = np.empty(H)
    cdef double z, r, ht, dhk, dah
    with nogil:
        for t in range(n - 1, -1, -1):
            for k in range(H):
                z = zr[t, k]
                r = zr[t, H + k]
                ht = cand[t, k]
                dhk = dh[k] + dH[t, k]
                dah = dhk * z * (1.0 - ht * ht)
                dA[t, k] = dhk * (ht - h[t, k]) * z * (1.0 - z)
                dA[t, H + k] = dah * uh[t, k] * r * (1.0 - r)
                dA[t, 2 * H + k] = dah
                dWh[t, k] = dA[t, k]
                dWh[t, H + k] = dA[t, H + k]
                dWh[t, 2 * H + k] = dah * r
                dh[k] = dhk * (1.0 - z)
            _gemv_t(W, dWh, t, rec)
            for k in range(H):
                dh[k] += rec[k]
    return dA_arr, dWh_arr, dh_arr
