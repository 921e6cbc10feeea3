import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crftagger.encoders import (
    Architecture,
    EncoderConfig,
    backward,
    count_params,
    forward,
    init_params,
    param_shapes,
)
from crftagger.tensor_core import Rng

RECURRENT = [Architecture.BIRNN, Architecture.BILSTM, Architecture.BIGRU]
ALL = RECURRENT + [Architecture.WINDOW]


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def setup(arch, seed=0, I=4, H=3, O=5, n=5, scale=0.5):
    cfg = EncoderConfig(arch, I, O, H)
    p = init_params(cfg, Rng(seed))
    r = np.random.default_rng(seed)
    for k in p:  # non-trivial biases and states
        p[k] = p[k] + r.uniform(-scale, scale, p[k].shape) * (p[k].ndim == 1)
    X = r.normal(size=(n, I))
    return cfg, p, X


def literal_direction(arch, p, side, xs, H):
    """Steps through the recurrence one token and one gate at a time."""
    U, W, h = p[f"{side}.U"], p[f"{side}.W"], p[f"{side}.h0"].copy()
    b = p.get(f"{side}.b", np.zeros(U.shape[0]))
    blk = lambda M, k: M[k * H:(k + 1) * H]  # noqa: E731
    c = p.get(f"{side}.c0")
    out = []
    for x in xs:
        if arch is Architecture.BIRNN:
            h = np.tanh(U @ x + W @ h + b)
        elif arch is Architecture.BILSTM:
            i = sig(blk(U, 0) @ x + blk(W, 0) @ h + blk(b, 0))
            f = sig(blk(U, 1) @ x + blk(W, 1) @ h + blk(b, 1))
            o = sig(blk(U, 2) @ x + blk(W, 2) @ h + blk(b, 2))
            g = np.tanh(blk(U, 3) @ x + blk(W, 3) @ h + blk(b, 3))
            c = c * f + g * i
            h = np.tanh(c) * o
        else:
            z = sig(blk(U, 0) @ x + blk(W, 0) @ h + blk(b, 0))
            r = sig(blk(U, 1) @ x + blk(W, 1) @ h + blk(b, 1))
            ht = np.tanh(blk(U, 2) @ x + r * (blk(W, 2) @ h) + blk(b, 2))
            h = z * ht + (1 - z) * h
        out.append(h)
    return out


def literal_scores(arch, p, cfg, X):
    n = X.shape[0]
    if arch is Architecture.WINDOW:
        half = cfg.window // 2
        rows = [p["pad_left"]] * half + list(X) + [p["pad_right"]] * half
        return np.array([p["V"] @ np.tanh(p["H"] @ np.concatenate(rows[t:t + cfg.window]) + p["bH"])
                         for t in range(n)])
    hl = literal_direction(arch, p, "left", list(X), cfg.n_hidden)
    hr = literal_direction(arch, p, "right", list(X[::-1]), cfg.n_hidden)[::-1]
    return np.array([p["V"] @ np.concatenate([hl[t], hr[t]]) for t in range(n)])


@pytest.mark.parametrize("arch", ALL)
def test_forward_matches_step_by_step_oracle(arch):
    cfg, p, X = setup(arch, seed=3)
    z, _ = forward(p, cfg, X)
    np.testing.assert_allclose(z, literal_scores(arch, p, cfg, X), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("bias", [True, False])
def test_birnn_single_token_closed_form(bias):
    cfg = EncoderConfig(Architecture.BIRNN, 3, 2, 4, rnn_bias=bias)
    p = init_params(cfg, Rng(1))
    assert ("left.b" in p) == bias
    x = np.random.default_rng(0).normal(size=3)
    z, tr = forward(p, cfg, x[None, :])
    hl = np.tanh(p["left.U"] @ x + p["left.W"] @ p["left.h0"] + (p["left.b"] if bias else 0))
    hr = np.tanh(p["right.U"] @ x + p["right.W"] @ p["right.h0"] + (p["right.b"] if bias else 0))
    np.testing.assert_allclose(tr.hidden[0], np.concatenate([hl, hr]), atol=1e-15)
    np.testing.assert_allclose(z[0], p["V"] @ np.concatenate([hl, hr]), atol=1e-14)


def test_lstm_saturated_gates_keep_cell_constant():
    cfg, p, X = setup(Architecture.BILSTM, n=6)
    H = cfg.n_hidden
    for side in ("left", "right"):
        p[f"{side}.b"][:H] = -800.0  # input gate -> 0
        p[f"{side}.b"][H:2 * H] = 800.0  # forget gate -> 1
    _, tr = forward(p, cfg, X)
    for side in (tr.left, tr.right):
        c = side.cache["c"]
        assert np.array_equal(c, np.tile(c[0], (c.shape[0], 1)))


def swap_sides(p):
    q = {}
    for k, v in p.items():
        if k.startswith("left."):
            q["right." + k[5:]] = v
        elif k.startswith("right."):
            q["left." + k[6:]] = v
        else:
            q[k] = v
    H = p["V"].shape[1] // 2
    q["V"] = np.concatenate([p["V"][:, H:], p["V"][:, :H]], axis=1)
    return q


@given(st.sampled_from(RECURRENT), st.integers(1, 7), st.integers(0, 10**6))
def test_direction_symmetry(arch, n, seed):
    cfg, p, X = setup(arch, seed=seed, n=n)
    z, tr = forward(p, cfg, X)
    z_rev, tr_rev = forward(swap_sides(p), cfg, X[::-1])
    H = cfg.n_hidden
    assert np.array_equal(tr.hidden[:, :H], tr_rev.hidden[::-1, H:])
    assert np.array_equal(tr.hidden[:, H:], tr_rev.hidden[::-1, :H])
    # V sums the two halves in swapped order, so agreement is to rounding
    np.testing.assert_allclose(z_rev[::-1], z, rtol=0, atol=1e-12)


@given(st.integers(1, 8), st.integers(0, 10**6), st.floats(0.1, 50.0))
def test_lstm_hidden_bounded(n, seed, scale):
    cfg, p, X = setup(Architecture.BILSTM, seed=seed, n=n)
    _, tr = forward(p, cfg, X * scale)
    assert np.all(np.abs(tr.hidden) <= 1.0)


@given(st.integers(1, 8), st.integers(0, 10**6))
def test_gru_state_between_candidate_and_previous(n, seed):
    cfg, p, X = setup(Architecture.BIGRU, seed=seed, n=n, scale=2.0)
    _, tr = forward(p, cfg, X)
    for d in (tr.left, tr.right):
        h, cand = d.h, d.cache["cand"]
        lo = np.minimum(cand, h[:-1])
        hi = np.maximum(cand, h[:-1])
        assert np.all(h[1:] >= lo - 1e-15) and np.all(h[1:] <= hi + 1e-15)


@pytest.mark.parametrize("arch", ALL)
def test_zero_score_gradient_gives_zero_gradients(arch):
    cfg, p, X = setup(arch)
    _, tr = forward(p, cfg, X)
    grads, dX = backward(p, cfg, tr, np.zeros((5, cfg.n_output)))
    assert set(grads) == set(p)
    assert all(not g.any() for g in grads.values()) and not dX.any()


@pytest.mark.parametrize("arch", ALL)
def test_gradients_match_finite_differences(arch):
    cfg, p, X = setup(arch, seed=11, I=3, H=3, O=4, n=4)
    G = np.random.default_rng(1).normal(size=(4, cfg.n_output))

    def loss():
        return float((forward(p, cfg, X)[0] * G).sum())

    _, tr = forward(p, cfg, X)
    grads, dX = backward(p, cfg, tr, G)
    h = 1e-5
    for name, arr, grad in [(k, p[k], grads[k]) for k in p] + [("X", X, dX)]:
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            fp = loss()
            arr[idx] = old - h
            fm = loss()
            arr[idx] = old
            num = (fp - fm) / (2 * h)
            rel = abs(num - grad[idx]) / max(abs(num), abs(grad[idx]), 1e-6)
            assert rel <= 1e-4, (name, idx, num, grad[idx])


@given(st.integers(1, 9), st.integers(0, 8), st.integers(0, 10**6))
def test_window_feature_gradient_is_local(n, t, seed):
    t = t % n
    cfg, p, X = setup(Architecture.WINDOW, seed=seed, n=n)
    _, tr = forward(p, cfg, X)
    G = np.zeros((n, cfg.n_output))
    G[t] = np.random.default_rng(seed).normal(size=cfg.n_output)
    _, dX = backward(p, cfg, tr, G)
    half = cfg.window // 2
    far = [u for u in range(n) if abs(u - t) > half]
    assert not dX[far].any()


def test_count_params_example():
    assert count_params(EncoderConfig(Architecture.BIRNN, 2, 2, 3)) == 54


@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 10))
def test_lstm_count_is_four_recurrent_blocks(I, H, O):
    rnn = EncoderConfig(Architecture.BIRNN, I, O, H)
    lstm = EncoderConfig(Architecture.BILSTM, I, O, H)
    out = O * 2 * H
    states = 2 * H  # h0 per direction
    rnn_block = count_params(rnn) - out - states
    lstm_block = count_params(lstm) - out - 2 * states  # h0 and c0
    assert lstm_block == 4 * rnn_block


@given(st.sampled_from(ALL), st.integers(1, 12), st.integers(1, 12), st.integers(1, 6),
       st.sampled_from([1, 3, 5, 7]), st.booleans())
def test_count_params_matches_allocation(arch, I, H, O, window, bias):
    cfg = EncoderConfig(arch, I, O, H, window=window, rnn_bias=bias)
    p = init_params(cfg, Rng(0))
    assert count_params(cfg) == sum(v.size for v in p.values())
    assert {k: v.shape for k, v in p.items()} == param_shapes(cfg)


@settings(max_examples=100)
@given(st.sampled_from(ALL), st.integers(1, 6))
def test_output_shape_contract(arch, n):
    cfg, p, X = setup(arch, n=n)
    z, tr = forward(p, cfg, X)
    assert z.shape == (n, cfg.n_output) and tr.n == n


def test_init_ranges():
    cfg = EncoderConfig(Architecture.BILSTM, 4, 3, 6)
    p = init_params(cfg, Rng(2))
    assert not p["left.b"].any()
    assert np.all(np.abs(p["left.h0"]) < 0.01) and np.all(np.abs(p["right.c0"]) < 0.01)


def test_errors():
    with pytest.raises(ValueError):
        EncoderConfig(Architecture.WINDOW, 2, 2, 2, window=4)
    with pytest.raises(ValueError):
        EncoderConfig("lstm", 2, 2, 2)
    cfg, p, X = setup(Architecture.BIGRU)
    with pytest.raises(ValueError):
        forward(p, cfg, X[:, :2])
    with pytest.raises(ValueError):
        forward(p, cfg, X[:0])
    _, tr = forward(p, cfg, X)
    with pytest.raises(ValueError):
        backward(p, cfg, tr, np.zeros((4, cfg.n_output)))
    other = EncoderConfig(Architecture.BILSTM, cfg.n_input, cfg.n_output, cfg.n_hidden)
    with pytest.raises(ValueError):
        backward(init_params(other, Rng(0)), other, tr, np.zeros((5, cfg.n_output)))
