"""Word lookup, character-CNN word embeddings and pretrained-vector I/O."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import PAD_LEFT_ID, PAD_RIGHT_ID, RARE, RARE_ID, Vocabulary, normalize_word
from .kernels import (
    charcnn_backward,
    charcnn_forward,
    charcnn_sentence_backward,
    charcnn_sentence_forward,
)
from .tensor_core import DTYPE, Rng, scaled_uniform_bound


class ConfigError(ValueError):
    pass


class FeatureRegime(enum.Enum):
    CE = "ce"
    WE = "we"
    WE_CE = "we+ce"

    @property
    def uses_words(self) -> bool:
        return self is not FeatureRegime.CE

    @property
    def uses_chars(self) -> bool:
        return self is not FeatureRegime.WE

    @property
    def label(self) -> str:
        return self.value.upper()

    def input_dim(self, d_we: int, d_ce: int) -> int:
        return {FeatureRegime.CE: d_ce, FeatureRegime.WE: d_we, FeatureRegime.WE_CE: d_we + d_ce}[self]


@dataclass
class WordEmbeddingTable:
    matrix: np.ndarray  # (d_we, |V|), column i is word i
    trainable: bool = True
    n_random: int = 0  # non-special columns that got a random vector when loading

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def random(cls, n_words: int, dim: int, rng: Rng, scale: float = 0.1) -> "WordEmbeddingTable":
        return cls(rng.uniform(-scale, scale, (dim, n_words)))

    @classmethod
    def zeros(cls, n_words: int, dim: int) -> "WordEmbeddingTable":
        return cls(np.zeros((dim, n_words), dtype=DTYPE))


@dataclass
class CharEmbeddingTable:
    matrix: np.ndarray  # (d_chr, |C|)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def random(cls, n_chars: int, dim: int, rng: Rng) -> "CharEmbeddingTable":
        r = scaled_uniform_bound(dim, n_chars)
        return cls(rng.uniform(-r, r, (dim, n_chars)))


@dataclass
class CharCnn:
    weight: np.ndarray  # (d_ce, d_chr * k)
    bias: np.ndarray  # (d_ce,)
    window: int = 3

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"character window must be odd and positive, got {self.window}")
        if self.weight.shape[1] % self.window:
            raise ConfigError(f"filter width {self.weight.shape[1]} not divisible by window {self.window}")

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def random(cls, d_chr: int, d_ce: int, rng: Rng, window: int = 3) -> "CharCnn":
        r = scaled_uniform_bound(d_chr * window, d_ce)
        return cls(rng.uniform(-r, r, (d_ce, d_chr * window)), np.zeros(d_ce, dtype=DTYPE), window)


@dataclass
class CharTrace:
    """What the backward pass needs from one :func:`char_embed` call."""

    padded: np.ndarray  # character ids including pads
    windows: np.ndarray  # (M, d_chr * k), row m is q^(m)
    scores: np.ndarray  # (M, d_ce) pre-max window scores
    argmax: np.ndarray  # (d_ce,) winning window per output unit


def lookup_word(table: WordEmbeddingTable, word_id: int) -> np.ndarray:
    n = table.matrix.shape[1]
    if not 0 <= word_id < n:
        raise IndexError(f"word id {word_id} outside vocabulary of size {n}")
    return table.matrix[:, word_id].copy()


def pad_chars(char_ids, window: int) -> np.ndarray:
    half = (window - 1) // 2
    return np.array([PAD_LEFT_ID] * half + list(char_ids) + [PAD_RIGHT_ID] * half, dtype=np.intp)


def char_embed(cnn: CharCnn, table: CharEmbeddingTable, char_ids) -> tuple[np.ndarray, CharTrace]:
    """Max-pooled convolution over the padded character sequence of one word.

    Ties between windows go to the lowest window index.
    """
    if len(char_ids) == 0:
        raise ValueError("char_embed needs at least one character")
    if cnn.weight.shape[1] != table.dim * cnn.window:
        raise ConfigError(
            f"filter expects {cnn.weight.shape[1]} inputs, table gives {table.dim} x window {cnn.window}"
        )
    padded = pad_chars(char_ids, cnn.window)
    n_chars = table.matrix.shape[1]
    if padded.max() >= n_chars or padded.min() < 0:
        raise IndexError(f"character id outside vocabulary of size {n_chars}")
    y, windows, scores, argmax = charcnn_forward(table.matrix, cnn.weight, cnn.bias, padded, cnn.window)
    return y, CharTrace(padded, windows, scores, argmax)


def backprop_char_embed(cnn: CharCnn, table: CharEmbeddingTable, trace: CharTrace | None, grad_y):
    """Gradients of one char_embed call: (dW, db, char ids, per-id column gradients).

    Only each unit's winning window receives gradient.  The column gradients
    come back as ``(ids, rows)`` with ``rows[i]`` the gradient for column
    ``ids[i]``, ids unique.
    """
    if trace is None:
        raise RuntimeError("backprop_char_embed called without a forward trace")
    grad_y = np.asarray(grad_y, dtype=DTYPE)
    if trace.argmax.shape[0] != cnn.out_dim or grad_y.shape != (cnn.out_dim,):
        raise RuntimeError("stale character trace: shape does not match this CNN")
    if trace.windows.shape[1] != table.dim * cnn.window:
        raise RuntimeError("stale character trace: window width does not match the table")
    dW, db, dQ = charcnn_backward(cnn.weight, trace.windows, trace.argmax, grad_y)
    d = table.dim
    ids, inv = np.unique(trace.padded, return_inverse=True)
    rows = np.zeros((ids.shape[0], d), dtype=DTYPE)
    k = cnn.window
    for s in range(k):
        np.add.at(rows, inv[s:s + dQ.shape[0]], dQ[:, s * d:(s + 1) * d])
    return dW, db, ids, rows


@dataclass
class SentenceCharTrace:
    """Trace of :func:`char_embed_sentence`: every token's windows stacked."""

    padded: np.ndarray  # all padded id sequences, concatenated
    starts: np.ndarray  # (n + 1,) offsets into ``padded``
    windows: np.ndarray  # (rows, d_chr * k)
    argmax: np.ndarray  # (n, d_ce) global window row per token and unit
    positions: np.ndarray  # (rows,) offset in ``padded`` where each window begins


def char_embed_sentence(cnn: CharCnn, table: CharEmbeddingTable, char_id_lists):
    """:func:`char_embed` for every token of a sentence in one kernel call; Y is (n, d_ce)."""
    if cnn.weight.shape[1] != table.dim * cnn.window:
        raise ConfigError(
            f"filter expects {cnn.weight.shape[1]} inputs, table gives {table.dim} x window {cnn.window}"
        )
    if any(len(ids) == 0 for ids in char_id_lists):
        raise ValueError("char_embed needs at least one character")
    pads = [pad_chars(ids, cnn.window) for ids in char_id_lists]
    padded = np.concatenate(pads)
    n_chars = table.matrix.shape[1]
    if padded.max() >= n_chars or padded.min() < 0:
        raise IndexError(f"character id outside vocabulary of size {n_chars}")
    lengths = np.array([len(x) for x in pads], dtype=np.intp)
    starts = np.concatenate([[0], np.cumsum(lengths)]).astype(np.intp)
    y, windows, argmax = charcnn_sentence_forward(table.matrix, cnn.weight, cnn.bias, padded, starts, cnn.window)
    n_win = lengths - cnn.window + 1
    positions = np.arange(windows.shape[0]) + np.repeat(np.arange(len(pads)) * (cnn.window - 1), n_win)
    return y, SentenceCharTrace(padded, starts, windows, argmax, positions)


def backprop_char_embed_sentence(cnn: CharCnn, table: CharEmbeddingTable, trace: SentenceCharTrace, grad_y):
    """(dW, db, dM) for :func:`char_embed_sentence`, dM dense like the table."""
    grad_y = np.ascontiguousarray(grad_y, dtype=DTYPE)
    if grad_y.shape != trace.argmax.shape:
        raise RuntimeError("stale character trace: shape does not match the gradient")
    dW, db, dQ = charcnn_sentence_backward(cnn.weight, trace.windows, trace.argmax, grad_y)
    d = table.dim
    dMt = np.zeros((table.matrix.shape[1], d), dtype=DTYPE)
    for s in range(cnn.window):
        np.add.at(dMt, trace.padded[trace.positions + s], dQ[:, s * d:(s + 1) * d])
    return dW, db, dMt.T.copy()


def token_features(
    regime: FeatureRegime,
    word_id: int | None = None,
    char_ids=None,
    *,
    words: WordEmbeddingTable | None = None,
    chars: CharEmbeddingTable | None = None,
    cnn: CharCnn | None = None,
) -> tuple[np.ndarray, CharTrace | None]:
    """Feature vector x for one token: y (CE), w (WE) or concat(w, y)."""
    parts = []
    trace = None
    if regime.uses_words:
        if words is None:
            raise ConfigError(f"regime {regime.value} needs a word embedding table")
        parts.append(lookup_word(words, word_id))
    if regime.uses_chars:
        if chars is None or cnn is None:
            raise ConfigError(f"regime {regime.value} needs a character table and CNN")
        y, trace = char_embed(cnn, chars, char_ids)
        parts.append(y)
    return (parts[0] if len(parts) == 1 else np.concatenate(parts)), trace


def _parse_vector_line(line: str, lineno: int, dim: int | None):
    parts = line.rstrip().split(" ")
    if len(parts) < 2:
        raise ValueError(f"line {lineno}: expected 'word v1 ... vd'")
    try:
        vec = np.array([float(x) for x in parts[1:]], dtype=DTYPE)
    except ValueError:
        raise ValueError(f"line {lineno}: non-numeric vector component") from None
    if dim is not None and vec.shape[0] != dim:
        raise ValueError(f"line {lineno}: vector has dimension {vec.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"line {lineno}: non-finite vector component")
    return parts[0], vec


def read_word_vectors(path: str, dim: int | None = None) -> dict[str, np.ndarray]:
    """Read the textual word2vec format; the ``count dim`` header is optional."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8", errors="strict") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            if lineno == 1:
                head = line.split()
                if len(head) == 2 and all(h.isdigit() for h in head):
                    file_dim = int(head[1])
                    if dim is not None and file_dim != dim:
                        raise ValueError(f"{path}: header dimension {file_dim} != expected {dim}")
                    dim = file_dim
                    continue
            word, vec = _parse_vector_line(line, lineno, dim)
            dim = vec.shape[0]
            vectors.setdefault(word, vec)
    return vectors


def load_pretrained(
    path: str,
    vocab: Vocabulary,
    dim: int = 50,
    rng: Rng | None = None,
    rare_token: str = RARE,
    word_norm: str = "lower-digits",
) -> WordEmbeddingTable:
    """Build M^we for ``vocab`` from a vector file.

    Words missing from the file get the file's rare-word vector when it has
    one, otherwise a small uniform random vector.  ``table.n_random`` counts
    the randomly initialised non-special columns.
    """
    vectors = read_word_vectors(path, dim)
    normalized: dict[str, np.ndarray] = {}
    for w, v in vectors.items():
        normalized.setdefault(normalize_word(w, word_norm), v)
    rare_vec = vectors.get(rare_token)
    rng = rng or Rng(0)
    mat = np.empty((dim, len(vocab)), dtype=DTYPE)
    n_random = 0
    for i, w in enumerate(vocab.items):
        key = rare_token if i == RARE_ID else w
        v = vectors.get(key)
        if v is None:
            v = normalized.get(key)
        if v is None and rare_vec is not None:
            v = rare_vec
        if v is None:
            v = rng.uniform(-0.1, 0.1, dim)
            n_random += i >= 3
        mat[:, i] = v
    return WordEmbeddingTable(mat, n_random=n_random)


def save_pretrained(table: WordEmbeddingTable, vocab: Vocabulary, path: str) -> None:
    d, n = table.matrix.shape
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{n} {d}\n")
        for i, w in enumerate(vocab.items):
            f.write(w + " " + " ".join(repr(float(x)) for x in table.matrix[:, i]) + "\n")
