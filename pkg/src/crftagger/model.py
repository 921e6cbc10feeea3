"""The full tagger: embeddings -> encoder -> CRF, with one flat parameter dict.

Parameter names::

    word.M      (d_we, |V|)        word embedding matrix
    char.M      (d_chr, |C|)       character embedding matrix
    char.W      (d_ce, d_chr * k)  character CNN filter
    char.b      (d_ce,)            character CNN bias
    enc.*                          encoder tensors (see encoders.param_shapes)
    crf.trans   (|T| + 1, |T|)     transition scores, start row last
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import crf, encoders
from .data import TagSet, TaggedSentence, Vocabulary, index_corpus
from .embeddings import (
    CharCnn,
    CharEmbeddingTable,
    ConfigError,
    FeatureRegime,
    WordEmbeddingTable,
    backprop_char_embed_sentence,
    char_embed_sentence,
)
from .encoders import Architecture, EncoderConfig
from .tensor_core import DTYPE, Rng


@dataclass
class ModelConfig:
    regime: str = "we+ce"
    architecture: str = "bilstm"
    n_hidden: int = 100
    d_we: int = 50
    d_chr: int = 100
    d_ce: int = 25
    char_window: int = 3
    nn_window: int = 5
    rnn_bias: bool = True
    word_norm: str = "lower-digits"
    constrain_bio: bool = False

    def __post_init__(self):
        try:
            FeatureRegime(self.regime)
            Architecture(self.architecture)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if min(self.n_hidden, self.d_we, self.d_chr, self.d_ce) < 1:
            raise ConfigError("model dimensions must be positive")
        if self.char_window % 2 == 0 or self.nn_window % 2 == 0:
            raise ConfigError("window sizes must be odd")

    @property
    def feature_regime(self) -> FeatureRegime:
        return FeatureRegime(self.regime)

    @property
    def arch(self) -> Architecture:
        return Architecture(self.architecture)

    @property
    def n_input(self) -> int:
        return self.feature_regime.input_dim(self.d_we, self.d_ce)

    def name(self) -> str:
        """Result-table name such as ``Bi-GRU+WE+CE``."""
        return f"{self.arch.label}+{self.feature_regime.label}"


class SparseColumns:
    """Gradient touching only some columns of a matrix: ``values[:, i]`` goes to column ``ids[i]``."""

    __slots__ = ("ids", "values")

    def __init__(self, ids: np.ndarray, values: np.ndarray):
        self.ids = ids
        self.values = values

    def dense(self, shape) -> np.ndarray:
        out = np.zeros(shape, dtype=DTYPE)
        out[:, self.ids] = self.values
        return out

    def sq_norm(self) -> float:
        return float((self.values ** 2).sum())

    def scale(self, c: float) -> None:
        self.values *= c


class Tagger:
    def __init__(self, config: ModelConfig, tagset: TagSet, words: Vocabulary, chars: Vocabulary,
                 params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.tagset = tagset
        self.words = words
        self.chars = chars
        self.encoder_config = EncoderConfig(
            config.arch, config.n_input, len(tagset), config.n_hidden, config.nn_window, config.rnn_bias
        )
        self.params = params if params is not None else {}
        self._mask = crf.bio_mask(tagset) if config.constrain_bio else None

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, config: ModelConfig, tagset: TagSet, words: Vocabulary, chars: Vocabulary, rng: Rng,
                   word_table: WordEmbeddingTable | None = None) -> "Tagger":
        model = cls(config, tagset, words, chars)
        r_words, r_chars, r_cnn, r_enc = rng.split(4)
        p = {}
        reg = config.feature_regime
        if reg.uses_words:
            if word_table is None:
                word_table = WordEmbeddingTable.random(len(words), config.d_we, r_words)
            if word_table.matrix.shape != (config.d_we, len(words)):
                raise ConfigError(f"word table shape {word_table.matrix.shape} != {(config.d_we, len(words))}")
            p["word.M"] = np.array(word_table.matrix, dtype=DTYPE)
        if reg.uses_chars:
            p["char.M"] = CharEmbeddingTable.random(len(chars), config.d_chr, r_chars).matrix
            cnn = CharCnn.random(config.d_chr, config.d_ce, r_cnn, config.char_window)
            p["char.W"], p["char.b"] = cnn.weight, cnn.bias
        for k, v in encoders.init_params(model.encoder_config, r_enc).items():
            p[f"enc.{k}"] = v
        p["crf.trans"] = crf.zero_transitions(len(tagset))
        model.params = p
        return model

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        c = self.config
        shapes = {}
        if c.feature_regime.uses_words:
            shapes["word.M"] = (c.d_we, len(self.words))
        if c.feature_regime.uses_chars:
            shapes["char.M"] = (c.d_chr, len(self.chars))
            shapes["char.W"] = (c.d_ce, c.d_chr * c.char_window)
            shapes["char.b"] = (c.d_ce,)
        for k, s in encoders.param_shapes(self.encoder_config).items():
            shapes[f"enc.{k}"] = s
        shapes["crf.trans"] = (len(self.tagset) + 1, len(self.tagset))
        return shapes

    def validate(self) -> None:
        exp = self.expected_shapes()
        if set(exp) != set(self.params):
            raise ConfigError(f"parameter names differ: missing {set(exp) - set(self.params)}, "
                              f"unexpected {set(self.params) - set(exp)}")
        for k, s in exp.items():
            if self.params[k].shape != s:
                raise ConfigError(f"parameter {k} has shape {self.params[k].shape}, expected {s}")

    def copy(self) -> "Tagger":
        return Tagger(self.config, self.tagset, self.words, self.chars,
                      {k: v.copy() for k, v in self.params.items()})

    def index(self, corpus) -> None:
        index_corpus(corpus, self.words, self.chars, self.config.word_norm)

    @property
    def enc_params(self) -> dict[str, np.ndarray]:
        return {k[4:]: v for k, v in self.params.items() if k.startswith("enc.")}

    # -- computation --------------------------------------------------------

    def _cnn(self):
        p = self.params
        return CharCnn(p["char.W"], p["char.b"], self.config.char_window), CharEmbeddingTable(p["char.M"])

    def features(self, sent: TaggedSentence):
        """Feature matrix (n, n_I) plus the sentence's character trace."""
        reg = self.config.feature_regime
        parts = []
        traces = None
        if reg.uses_words:
            parts.append(self.params["word.M"][:, sent.word_ids].T)
        if reg.uses_chars:
            cnn, table = self._cnn()
            # an empty token cannot occur in parsed input; guard for hand-built sentences
            ys, traces = char_embed_sentence(cnn, table, [ids if len(ids) else [0] for ids in sent.char_ids])
            parts.append(ys)
        X = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        return np.ascontiguousarray(X), traces

    def emissions(self, sent: TaggedSentence):
        X, traces = self.features(sent)
        Z, enc_trace = encoders.forward(self.enc_params, self.encoder_config, X)
        return Z, (X, traces, enc_trace)

    def decode_trans(self) -> np.ndarray:
        t = self.params["crf.trans"]
        return t + self._mask if self._mask is not None else t

    def predict(self, sent: TaggedSentence) -> list[int]:
        Z, _ = self.emissions(sent)
        return crf.viterbi(Z, self.decode_trans()).tags

    def loss(self, sent: TaggedSentence) -> float:
        Z, _ = self.emissions(sent)
        return crf.nll_and_gradients(Z, sent.gold_tags, self.params["crf.trans"])[0]

    def loss_and_grads(self, sent: TaggedSentence, update_words: bool = True):
        """NLL of the gold tags and gradients for every parameter.

        ``word.M`` comes back as :class:`SparseColumns`; everything else is dense.
        """
        Z, (X, traces, enc_trace) = self.emissions(sent)
        loss, dZ, dtrans = crf.nll_and_gradients(Z, sent.gold_tags, self.params["crf.trans"])
        enc_grads, dX = encoders.backward(self.enc_params, self.encoder_config, enc_trace, dZ)
        grads: dict = {f"enc.{k}": v for k, v in enc_grads.items()}
        grads["crf.trans"] = dtrans
        reg = self.config.feature_regime
        off = 0
        if reg.uses_words:
            d_we = self.config.d_we
            if update_words:
                ids, inv = np.unique(np.asarray(sent.word_ids, dtype=np.intp), return_inverse=True)
                vals = np.zeros((ids.shape[0], d_we))
                np.add.at(vals, inv, dX[:, :d_we])
                grads["word.M"] = SparseColumns(ids, vals.T.copy())
            off = d_we
        if reg.uses_chars:
            cnn, table = self._cnn()
            dW, db, dM = backprop_char_embed_sentence(cnn, table, traces, dX[:, off:])
            grads["char.W"], grads["char.b"], grads["char.M"] = dW, db, dM
        return loss, grads
