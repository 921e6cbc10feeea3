"""Dense float64 numerics shared by every other module.

Matrices and vectors are plain ``numpy.ndarray`` objects with dtype float64
(row-major / C order).  The helpers here add the shape checks and the
numerically careful variants (stable sigmoid, max-shifted log-sum-exp) the
rest of the package relies on.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64


def as_vector(v) -> np.ndarray:
    a = np.ascontiguousarray(v, dtype=DTYPE)
    if a.ndim != 1:
        raise ValueError(f"expected a vector, got shape {a.shape}")
    return a


def as_matrix(m) -> np.ndarray:
    a = np.ascontiguousarray(m, dtype=DTYPE)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    return a


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Return ``m @ v`` after checking that the inner dimensions agree."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v


def log_sum_exp(v, axis=None):
    """log(sum(exp(v))) with the max shifted out so finite input stays finite."""
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    if axis is None:
        m = v.max()
        return float(m + np.log(np.exp(v - m).sum()))
    m = v.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(v - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"elementwise shape mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown elementwise op {op!r}")


def sigmoid(x):
    """Logistic function; never evaluates exp of a positive argument."""
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=DTYPE)
    m = v.max(axis=axis, keepdims=True)
    e = np.exp(v - m)
    return e / e.sum(axis=axis, keepdims=True)


def one_hot(i: int, n: int) -> np.ndarray:
    h = np.zeros(n, dtype=DTYPE)
    h[i] = 1.0
    return h


def scaled_uniform_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


class Rng:
    """Seeded counter-based generator (Philox) owned by the caller.

    ``split`` derives independent child streams, so e.g. every experiment
    cell can get its own generator without sharing state.
    """

    def __init__(self, seed: int = 0, *, _bitgen=None):
        if _bitgen is None:
            if seed < 0 or seed >= 2**64:
                raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
            _bitgen = np.random.Philox(np.random.SeedSequence(seed))
        self.seed = seed
        self._gen = np.random.Generator(_bitgen)

    def split(self, n: int) -> list["Rng"]:
        children = self._gen.bit_generator.seed_seq.spawn(n)
        return [Rng(self.seed, _bitgen=np.random.Philox(s)) for s in children]

    def uniform(self, lo: float, hi: float, size) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"uniform needs lo < hi, got lo={lo} hi={hi}")
        return self._gen.uniform(lo, hi, size)

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, seq, size=None, replace=True):
        return self._gen.choice(seq, size=size, replace=replace)


def rng_uniform(rng: Rng, lo: float, hi: float, n: int) -> np.ndarray:
    return rng.uniform(lo, hi, n)
