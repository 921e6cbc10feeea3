"""Linear-chain CRF on top of per-token emission scores.

The transition matrix has one row per tag plus a final start row:
``trans[k, j]`` scores moving from tag k to tag j and ``trans[T, j]``
scores starting a sentence with tag j.  There is no end transition.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .tensor_core import DTYPE

ILLEGAL = -1e6


@dataclass
class DecodeResult:
    tags: list[int]
    score: float


def zero_transitions(n_tags: int) -> np.ndarray:
    return np.zeros((n_tags + 1, n_tags), dtype=DTYPE)


def _check(emis: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    emis = np.ascontiguousarray(emis, dtype=DTYPE)
    trans = np.ascontiguousarray(trans, dtype=DTYPE)
    if emis.ndim != 2 or emis.shape[0] < 1:
        raise ValueError(f"emissions must be a nonempty (n, T) matrix, got {emis.shape}")
    T = emis.shape[1]
    if trans.shape != (T + 1, T):
        raise ValueError(f"transition matrix must be {(T + 1, T)} for {T} tags, got {trans.shape}")
    return emis, trans


def _check_tags(tags: Sequence[int], n: int, T: int) -> np.ndarray:
    tags = np.asarray(tags, dtype=np.intp)
    if tags.shape != (n,):
        raise ValueError(f"tag sequence has length {tags.shape[0] if tags.ndim else 0}, sentence has {n}")
    if n and (tags.min() < 0 or tags.max() >= T):
        raise ValueError(f"tag index outside [0, {T})")
    return tags


def sentence_score(emis, tags: Sequence[int], trans) -> float:
    """Sum over tokens of transition-into-tag plus emission of the tag."""
    emis, trans = _check(emis, trans)
    n, T = emis.shape
    tags = _check_tags(tags, n, T)
    prev = np.concatenate([[T], tags[:-1]])
    return float(trans[prev, tags].sum() + emis[np.arange(n), tags].sum())


def log_partition(emis, trans) -> float:
    emis, trans = _check(emis, trans)
    return kernels.crf_log_partition(emis, trans)


def marginals(emis, trans) -> np.ndarray:
    """Per-position tag posteriors, shape (n, T)."""
    emis, trans = _check(emis, trans)
    return kernels.crf_expectations(emis, trans)[1]


def nll_and_gradients(emis, gold: Sequence[int], trans):
    """Negative log-likelihood of ``gold`` plus its gradients.

    Returns ``(loss, d_emis, d_trans)`` where ``d_emis = marginals - onehot(gold)``
    and ``d_trans`` is expected minus observed transition counts.
    """
    emis, trans = _check(emis, trans)
    n, T = emis.shape
    gold = _check_tags(gold, n, T)
    if T == 1:
        # a single tag admits exactly one sequence
        return 0.0, np.zeros_like(emis), np.zeros_like(trans)
    log_z, marg, expected = kernels.crf_expectations(emis, trans)
    loss = log_z - sentence_score(emis, gold, trans)
    d_emis = marg.copy()
    d_emis[np.arange(n), gold] -= 1.0
    d_trans = expected
    prev = np.concatenate([[T], gold[:-1]])
    np.subtract.at(d_trans, (prev, gold), 1.0)
    return max(loss, 0.0), d_emis, d_trans


def viterbi(emis, trans) -> DecodeResult:
    emis, trans = _check(emis, trans)
    path, _ = kernels.crf_viterbi(emis, trans)
    tags = [int(t) for t in path]
    # the path score is recomputed so it equals sentence_score exactly
    return DecodeResult(tags, sentence_score(emis, tags, trans))


def bio_mask(tagset) -> np.ndarray:
    """Additive (T + 1, T) mask with ILLEGAL on transitions BIO forbids."""
    T = len(tagset)
    mask = np.zeros((T + 1, T), dtype=DTYPE)
    for j in range(T):
        if not tagset.is_allowed(None, j):
            mask[T, j] = ILLEGAL
        for k in range(T):
            if not tagset.is_allowed(k, j):
                mask[k, j] = ILLEGAL
    return mask
