"""Per-sentence Adagrad training, ablation switches and gradient checking."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import RARE_ID, TagSet, TaggedSentence, Vocabulary, build_vocabularies
from .embeddings import ConfigError, WordEmbeddingTable, char_embed, load_pretrained
from .evaluation import corpus_spans, evaluate
from .model import ModelConfig, SparseColumns, Tagger
from .tensor_core import DTYPE, Rng

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class AdagradState:
    """Per-tensor squared-gradient accumulators."""

    def __init__(self, learning_rate: float = 0.02, eps: float = 1e-8):
        if learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        self.lr = learning_rate
        self.eps = eps
        self.G: dict[str, np.ndarray] = {}

    def accumulator(self, name: str, shape) -> np.ndarray:
        g = self.G.get(name)
        if g is None:
            g = self.G[name] = np.zeros(shape, dtype=DTYPE)
        return g


def adagrad_step(state: AdagradState, tensor: np.ndarray, grad, name: str = "") -> np.ndarray:
    """In-place ``G += g*g; tensor -= lr * g / sqrt(G + eps)``; returns ``tensor``.

    ``grad`` may be :class:`SparseColumns`, in which case only those columns move.
    """
    G = state.accumulator(name, tensor.shape)
    if isinstance(grad, SparseColumns):
        if grad.values.shape != (tensor.shape[0], grad.ids.shape[0]):
            raise ValueError(f"sparse gradient {grad.values.shape} does not fit tensor {tensor.shape}")
        g = grad.values
        Gc = G[:, grad.ids] + g * g
        G[:, grad.ids] = Gc
        tensor[:, grad.ids] -= state.lr * g / np.sqrt(Gc + state.eps)
        return tensor
    grad = np.asarray(grad)
    if grad.shape != tensor.shape:
        raise ValueError(f"gradient shape {grad.shape} != tensor shape {tensor.shape}")
    G += grad * grad
    tensor -= state.lr * grad / np.sqrt(G + state.eps)
    return tensor


def clip_global_norm(grads: dict, max_norm: float | None) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    total = 0.0
    for g in grads.values():
        total += g.sq_norm() if isinstance(g, SparseColumns) else float((g * g).sum())
    norm = math.sqrt(total)
    if max_norm is not None and norm > max_norm:
        c = max_norm / norm
        for g in grads.values():
            if isinstance(g, SparseColumns):
                g.scale(c)
            else:
                g *= c
    return norm


@dataclass
class TrainConfig:
    epochs: int = 50
    seed: int = 0
    learning_rate: float = 0.02
    eps: float = 1e-8
    shuffle: bool = True
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
    update_word_vectors: bool = True
    init_word_vectors: str = "auto"  # auto | pretrained | zeros | random
    vectors: str | None = None
    rare_token: str = "<RARE>"
    min_freq: int = 1
    clip_norm: float | None = 5.0
    patience: int = 5  # 0 disables early stopping

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.init_word_vectors not in ("auto", "pretrained", "zeros", "random"):
            raise ConfigError(f"unknown word init {self.init_word_vectors!r}")
        if self.init_word_vectors == "pretrained" and not self.vectors:
            raise ConfigError("init_word_vectors=pretrained needs a vectors file")
        self.model_config()

    @property
    def word_init(self) -> str:
        if self.init_word_vectors == "auto":
            return "pretrained" if self.vectors else "random"
        return self.init_word_vectors

    def model_config(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        return ModelConfig(**{k: v for k, v in asdict(self).items() if k in names})

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    precision: float
    recall: float
    f1: float
    grad_norm: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = -1.0
    wall_time: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"epoch={e.epoch}\tloss={e.loss!r}\tdev_precision={e.precision!r}\tdev_recall={e.recall!r}"
            f"\tdev_f1={e.f1!r}\tgrad_norm={e.grad_norm!r}"
            for e in self.epochs
        ]
        lines.append(f"best_epoch={self.best_epoch}\tbest_dev_f1={self.best_f1!r}\twall_time={self.wall_time:.3f}")
        return "\n".join(lines) + "\n"


def build_model(corpus: list[TaggedSentence], tagset: TagSet, config: TrainConfig, rng: Rng) -> Tagger:
    mc = config.model_config()
    words, chars = build_vocabularies(corpus, config.min_freq, config.word_norm)
    r_vec, r_model = rng.split(2)
    table = None
    if mc.feature_regime.uses_words:
        init = config.word_init
        if init == "pretrained":
            table = load_pretrained(config.vectors, words, config.d_we, r_vec, config.rare_token, config.word_norm)
            log.info("pretrained vectors: %d of %d words initialised randomly", table.n_random, len(words) - 3)
        elif init == "zeros":
            table = WordEmbeddingTable.zeros(len(words), config.d_we)
        else:
            table = WordEmbeddingTable.random(len(words), config.d_we, r_vec)
    return Tagger.initialize(mc, tagset, words, chars, r_model, table)


def evaluate_model(model: Tagger, corpus: list[TaggedSentence]):
    gold = corpus_spans((s.gold_tags for s in corpus), model.tagset)
    pred = corpus_spans((model.predict(s) for s in corpus), model.tagset)
    return evaluate(gold, pred, model.tagset.classes)


def train(
    corpus: list[TaggedSentence],
    dev: list[TaggedSentence],
    config: TrainConfig,
    rng: Rng,
    tagset: TagSet,
    model: Tagger | None = None,
) -> tuple[Tagger, TrainReport]:
    """Train with Adagrad, one update per sentence; returns the best-dev model."""
    if not corpus or not dev:
        raise ConfigError("training and development corpora must be nonempty")
    t0 = time.perf_counter()
    r_init, r_order = rng.split(2)
    if model is None:
        model = build_model(corpus, tagset, config, r_init)
    if model.tagset != tagset:
        raise ConfigError(f"model tag set {model.tagset.tags} != corpus tag set {tagset.tags}")
    model.index(corpus)
    model.index(dev)
    opt = AdagradState(config.learning_rate, config.eps)
    update_words = config.update_word_vectors
    report = TrainReport()
    best = model.copy()
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = r_order.permutation(len(corpus)) if config.shuffle else np.arange(len(corpus))
        total = 0.0
        max_norm = 0.0
        for idx in order:
            sent = corpus[idx]
            loss, grads = model.loss_and_grads(sent, update_words)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at training sentence {idx} (epoch {epoch})")
            total += loss
            max_norm = max(max_norm, clip_global_norm(grads, config.clip_norm))
            for name, g in grads.items():
                if name == "word.M" and not update_words:
                    continue
                adagrad_step(opt, model.params[name], g, name)
        res = evaluate_model(model, dev)
        rec = EpochRecord(epoch, total / len(corpus), res.precision, res.recall, res.f1, max_norm)
        report.epochs.append(rec)
        log.info("epoch %d loss %.4f dev P %.4f R %.4f F1 %.4f", epoch, rec.loss, rec.precision, rec.recall, rec.f1)
        if res.f1 > report.best_f1:
            report.best_f1, report.best_epoch = res.f1, epoch
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if config.patience and stale >= config.patience:
                break
    report.wall_time = time.perf_counter() - t0
    return best, report


# -- gradient checking -----------------------------------------------------

@dataclass
class TensorCheck:
    name: str
    checked: int
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    label: str
    tolerance: float
    tensors: list[TensorCheck]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tensors)

    @property
    def max_rel_err(self) -> float:
        return max((t.max_rel_err for t in self.tensors), default=0.0)

    def lines(self) -> list[str]:
        out = []
        for t in self.tensors:
            verdict = "PASS" if t.passed else "FAIL"
            out.append(f"{verdict} {self.label} {t.name} max_rel_err={t.max_rel_err:.3e} "
                       f"(n={t.checked}, tol={self.tolerance:g})")
        out.extend(f"NOTE {self.label} {n}" for n in self.notes)
        return out


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries meaningful."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(loss_fn, params: dict[str, np.ndarray], analytic: dict[str, np.ndarray], rng: Rng,
                    h: float = 1e-5, tolerance: float = 1e-4, per_tensor: int = 60,
                    candidates: dict[str, np.ndarray] | None = None, label: str = "") -> GradCheckReport:
    """Central differences of ``loss_fn()`` against ``analytic`` for each tensor.

    ``loss_fn`` reads ``params`` (mutated in place and restored per probe).
    Tensors with at most ``per_tensor`` entries are checked exhaustively;
    larger ones on a random subset of ``per_tensor`` entries, drawn first
    from ``candidates[name]`` (flat indices) when given and topped up from
    the remaining entries if the candidates are too few.
    """
    checks = []
    for name, p in params.items():
        g = analytic[name]
        pool = candidates.get(name) if candidates else None
        if pool is None:
            pool = np.arange(p.size)
        if pool.size > per_tensor:
            pool = rng.choice(pool, size=per_tensor, replace=False)
        elif pool.size < min(per_tensor, p.size):
            rest = np.setdiff1d(np.arange(p.size), pool)
            pool = np.concatenate([pool, rng.choice(rest, size=min(per_tensor, p.size) - pool.size, replace=False)])
        pool = np.sort(pool)
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        worst = 0.0
        for i in pool:
            old = flat[i]
            flat[i] = old + h
            lp = loss_fn()
            flat[i] = old - h
            lm = loss_fn()
            flat[i] = old
            worst = max(worst, relative_error(float(gflat[i]), (lp - lm) / (2 * h)))
        checks.append(TensorCheck(name, int(pool.size), worst, worst <= tolerance))
    return GradCheckReport(label, tolerance, checks)


def _random_sentence(rng: Rng, n: int, n_words: int, n_chars: int, n_tags: int) -> TaggedSentence:
    word_ids = [int(x) for x in rng.integers(3, n_words, n)]
    char_ids = [[int(c) for c in rng.integers(3, n_chars, int(rng.integers(1, 6)))] for _ in range(n)]
    tags = [int(x) for x in rng.integers(0, n_tags, n)]
    s = TaggedSentence(tokens=[f"w{w}" for w in word_ids], word_ids=word_ids, char_ids=char_ids, gold_tags=tags)
    return s


def _argmax_margin(model: Tagger, sent: TaggedSentence) -> float:
    if not model.config.feature_regime.uses_chars:
        return math.inf
    cnn, table = model._cnn()
    worst = math.inf
    for ids in sent.char_ids:
        _, tr = char_embed(cnn, table, ids)
        if tr.scores.shape[0] < 2:
            continue
        s = np.sort(tr.scores, axis=0)
        worst = min(worst, float((s[-1] - s[-2]).min()))
    return worst


def grad_check_crf(rng: Rng, n: int = 5, n_tags: int = 4, tolerance: float = 1e-6, h: float = 1e-5) -> GradCheckReport:
    """Finite-difference check of the CRF negative log-likelihood alone."""
    from . import crf

    params = {"emissions": rng.normal((n, n_tags)), "crf.trans": rng.normal((n_tags + 1, n_tags))}
    gold = [int(x) for x in rng.integers(0, n_tags, n)]
    _, de, dt = crf.nll_and_gradients(params["emissions"], gold, params["crf.trans"])

    def loss_fn():
        return crf.nll_and_gradients(params["emissions"], gold, params["crf.trans"])[0]

    return check_gradients(loss_fn, params, {"emissions": de, "crf.trans": dt}, rng, h, tolerance, label="crf")


def grad_check(config: ModelConfig, rng: Rng, tolerance: float = 1e-4, *, n_tokens: int = 5, n_tags: int = 4,
               n_words: int = 12, n_chars: int = 10, h: float = 1e-5, per_tensor: int = 60,
               max_resample: int = 20) -> GradCheckReport:
    """Finite-difference check of every trainable tensor of a small random model."""
    if config.n_hidden > 5 or n_tokens > 5 or n_tags > 4:
        raise ConfigError("grad_check expects n_hidden <= 5, sentence length <= 5 and at most 4 tags")
    classes = [f"C{i}" for i in range((n_tags - 1) // 2)] or ["C0"]
    tagset = TagSet(classes)
    n_tags = len(tagset)
    words = Vocabulary(f"w{i}" for i in range(n_words - 3))
    chars = Vocabulary(chr(97 + i) for i in range(n_chars - 3))
    notes = []
    for attempt in range(max_resample + 1):
        model = Tagger.initialize(config, tagset, words, chars, rng)
        # make every tensor nonzero so no gradient is trivially zero
        for k, v in model.params.items():
            v += rng.uniform(-0.5, 0.5, v.shape)
        sent = _random_sentence(rng, n_tokens, n_words, n_chars, n_tags)
        if not config.feature_regime.uses_chars or _argmax_margin(model, sent) > 1e-4:
            break
        notes.append(f"attempt {attempt}: character max-pool near tie, resampled")
    else:
        raise TrainingError("could not find a non-degenerate point for the character CNN")

    _, grads = model.loss_and_grads(sent)
    analytic = {}
    candidates = {}
    for k, p in model.params.items():
        g = grads.get(k)
        if isinstance(g, SparseColumns):
            g = g.dense(p.shape)
        analytic[k] = g if g is not None else np.zeros_like(p)
        if k == "word.M":
            cols = np.unique(sent.word_ids)
        elif k == "char.M":
            cols = np.unique(np.concatenate([[1, 2], *[np.asarray(c) for c in sent.char_ids]]))
        else:
            continue
        rows = np.arange(p.shape[0])
        candidates[k] = (rows[:, None] * p.shape[1] + cols[None, :]).reshape(-1)
    report = check_gradients(lambda: model.loss(sent), model.params, analytic, rng, h, tolerance, per_tensor,
                             candidates, label=config.name())
    report.notes = notes
    return report


def unknown_rate(corpus: list[TaggedSentence]) -> float:
    total = sum(len(s) for s in corpus)
    return sum(w == RARE_ID for s in corpus for w in s.word_ids) / max(total, 1)
