"""Sentence encoders mapping token features to per-tag emission scores.

Four architectures share one contract: ``forward`` turns an (n, n_I)
feature matrix into (n, n_O) scores plus a trace, ``backward`` turns score
gradients into parameter gradients and feature gradients.

Recurrent parameters are stored per direction under ``left.`` / ``right.``
with the gates stacked row-wise: LSTM rows are (input, forget, output,
candidate), GRU rows are (update, reset, candidate).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor_core import DTYPE, Rng, scaled_uniform_bound


class Architecture(enum.Enum):
    BIRNN = "birnn"
    BILSTM = "bilstm"
    BIGRU = "bigru"
    WINDOW = "window"

    @property
    def label(self) -> str:
        return {"birnn": "Bi-RNN", "bilstm": "Bi-LSTM", "bigru": "Bi-GRU", "window": "NN"}[self.value]

    @property
    def gates(self) -> int:
        return {"birnn": 1, "bilstm": 4, "bigru": 3}.get(self.value, 0)


@dataclass
class EncoderConfig:
    architecture: Architecture
    n_input: int
    n_output: int
    n_hidden: int = 100
    window: int = 5
    rnn_bias: bool = True

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and positive, got {self.window}")
        if min(self.n_input, self.n_output, self.n_hidden) < 1:
            raise ValueError(f"encoder dimensions must be positive: {self}")


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every trainable encoder tensor, in a fixed order."""
    I, H, O = config.n_input, config.n_hidden, config.n_output
    arch = config.architecture
    if arch is Architecture.WINDOW:
        return {
            "H": (H, config.window * I),
            "bH": (H,),
            "V": (O, H),
            "pad_left": (I,),
            "pad_right": (I,),
        }
    g = arch.gates
    shapes: dict[str, tuple[int, ...]] = {}
    for side in ("left", "right"):
        shapes[f"{side}.U"] = (g * H, I)
        shapes[f"{side}.W"] = (g * H, H)
        if arch is not Architecture.BIRNN or config.rnn_bias:
            shapes[f"{side}.b"] = (g * H,)
        shapes[f"{side}.h0"] = (H,)
        if arch is Architecture.BILSTM:
            shapes[f"{side}.c0"] = (H,)
    shapes["V"] = (O, 2 * H)
    return shapes


def count_params(config: EncoderConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def init_params(config: EncoderConfig, rng: Rng) -> dict[str, np.ndarray]:
    """Scaled-uniform weights, zero biases, initial states in (-0.01, 0.01)."""
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("b", "bH"):
            params[name] = np.zeros(shape, dtype=DTYPE)
        elif leaf in ("h0", "c0", "pad_left", "pad_right"):
            params[name] = rng.uniform(-0.01, 0.01, shape)
        else:
            r = scaled_uniform_bound(shape[1], shape[0])
            params[name] = rng.uniform(-r, r, shape)
    return params


@dataclass
class _DirTrace:
    X: np.ndarray
    h: np.ndarray  # (n + 1, H) with row 0 the initial state
    cache: dict = field(default_factory=dict)


@dataclass
class ForwardTrace:
    architecture: Architecture
    n: int
    n_input: int
    left: _DirTrace | None = None
    right: _DirTrace | None = None
    hidden: np.ndarray | None = None  # (n, 2H) or (n, H) for the window network
    windows: np.ndarray | None = None


# -- single direction scans ----------------------------------------------

def _rnn_forward(p, X, bias):
    pre = X @ p["U"].T
    if bias is not None:
        pre += bias
    return _DirTrace(X, kernels.rnn_scan_forward(pre, p["W"], p["h0"]))


def _rnn_backward(p, tr, dH, has_bias):
    dA, dh0 = kernels.rnn_scan_backward(p["W"], tr.h, np.ascontiguousarray(dH))
    g = {"U": dA.T @ tr.X, "W": dA.T @ tr.h[:-1], "h0": dh0}
    if has_bias:
        g["b"] = dA.sum(axis=0)
    return g, dA @ p["U"]


def _lstm_forward(p, X):
    pre = X @ p["U"].T + p["b"]
    h, c, gates = kernels.lstm_scan_forward(pre, p["W"], p["h0"], p["c0"])
    return _DirTrace(X, h, {"c": c, "gates": gates})


def _lstm_backward(p, tr, dH):
    dA, dh0, dc0 = kernels.lstm_scan_backward(p["W"], tr.h, tr.cache["c"], tr.cache["gates"],
                                              np.ascontiguousarray(dH))
    g = {"U": dA.T @ tr.X, "W": dA.T @ tr.h[:-1], "b": dA.sum(axis=0), "h0": dh0, "c0": dc0}
    return g, dA @ p["U"]


def _gru_forward(p, X):
    pre = X @ p["U"].T + p["b"]
    h, zr, cand, uh = kernels.gru_scan_forward(pre, p["W"], p["h0"])
    return _DirTrace(X, h, {"zr": zr, "cand": cand, "uh": uh})


def _gru_backward(p, tr, dH):
    c = tr.cache
    dA, dWh, dh0 = kernels.gru_scan_backward(p["W"], tr.h, c["zr"], c["cand"], c["uh"],
                                             np.ascontiguousarray(dH))
    g = {"U": dA.T @ tr.X, "W": dWh.T @ tr.h[:-1], "b": dA.sum(axis=0), "h0": dh0}
    return g, dA @ p["U"]


def _dir_params(params, side):
    pre = side + "."
    return {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}


def _scan_forward(arch, p, X, rnn_bias):
    if arch is Architecture.BIRNN:
        return _rnn_forward(p, X, p.get("b") if rnn_bias else None)
    if arch is Architecture.BILSTM:
        return _lstm_forward(p, X)
    return _gru_forward(p, X)


def _scan_backward(arch, p, tr, dH, rnn_bias):
    if arch is Architecture.BIRNN:
        return _rnn_backward(p, tr, dH, rnn_bias)
    if arch is Architecture.BILSTM:
        return _lstm_backward(p, tr, dH)
    return _gru_backward(p, tr, dH)


# -- public API ----------------------------------------------------------

def forward(params: dict[str, np.ndarray], config: EncoderConfig, features) -> tuple[np.ndarray, ForwardTrace]:
    """Emission scores (n, n_O) for a sentence's (n, n_I) feature matrix."""
    X = np.ascontiguousarray(features, dtype=DTYPE)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] != config.n_input:
        raise ValueError(f"features must be (n >= 1, {config.n_input}), got {X.shape}")
    arch = config.architecture
    n = X.shape[0]
    trace = ForwardTrace(arch, n, config.n_input)
    if arch is Architecture.WINDOW:
        half = config.window // 2
        P = np.concatenate([np.tile(params["pad_left"], (half, 1)), X, np.tile(params["pad_right"], (half, 1))])
        win = np.concatenate([P[s:s + n] for s in range(config.window)], axis=1)
        hid = np.tanh(win @ params["H"].T + params["bH"])
        trace.windows, trace.hidden = win, hid
        return hid @ params["V"].T, trace
    left = _scan_forward(arch, _dir_params(params, "left"), X, config.rnn_bias)
    right = _scan_forward(arch, _dir_params(params, "right"), X[::-1].copy(), config.rnn_bias)
    trace.left, trace.right = left, right
    trace.hidden = np.concatenate([left.h[1:], right.h[:0:-1]], axis=1)
    return trace.hidden @ params["V"].T, trace


def backward(params: dict[str, np.ndarray], config: EncoderConfig, trace: ForwardTrace, grad_scores):
    """Gradients for every encoder tensor plus d(features), shape (n, n_I)."""
    dZ = np.asarray(grad_scores, dtype=DTYPE)
    if trace.architecture is not config.architecture or trace.n_input != config.n_input:
        raise ValueError("trace was produced by a different encoder configuration")
    if dZ.shape != (trace.n, config.n_output):
        raise ValueError(f"score gradient must be {(trace.n, config.n_output)}, got {dZ.shape}")
    arch = config.architecture
    grads: dict[str, np.ndarray] = {"V": dZ.T @ trace.hidden}
    dHid = dZ @ params["V"]
    if arch is Architecture.WINDOW:
        n, half, I = trace.n, config.window // 2, config.n_input
        dA = dHid * (1.0 - trace.hidden ** 2)
        grads["H"] = dA.T @ trace.windows
        grads["bH"] = dA.sum(axis=0)
        dWin = dA @ params["H"]
        dP = np.zeros((n + 2 * half, I))
        for s in range(config.window):
            dP[s:s + n] += dWin[:, s * I:(s + 1) * I]
        grads["pad_left"] = dP[:half].sum(axis=0)
        grads["pad_right"] = dP[half + n:].sum(axis=0)
        return grads, dP[half:half + n]
    H = config.n_hidden
    gl, dXl = _scan_backward(arch, _dir_params(params, "left"), trace.left, dHid[:, :H], config.rnn_bias)
    gr, dXr = _scan_backward(arch, _dir_params(params, "right"), trace.right, dHid[::-1, H:], config.rnn_bias)
    for side, g in (("left", gl), ("right", gr)):
        for k, v in g.items():
            grads[f"{side}.{k}"] = v
    return grads, dXl + dXr[::-1]
