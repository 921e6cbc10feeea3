import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crftagger import crf
from crftagger.data import TagSet
from crftagger.tensor_core import log_sum_exp, softmax

from conftest import all_paths, brute_score


@st.composite
def lattices(draw, max_n=6, max_T=4):
    n = draw(st.integers(1, max_n))
    T = draw(st.integers(1, max_T))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    scale = draw(st.sampled_from([0.1, 1.0, 5.0]))
    return r.normal(size=(n, T)) * scale, r.normal(size=(T + 1, T)) * scale


def enumerate_lattice(emis, trans):
    n, T = emis.shape
    paths = list(all_paths(n, T))
    scores = np.array([brute_score(emis, p, trans) for p in paths])
    return paths, scores


def test_score_single_token():
    emis = np.array([[1.0, 2.0]])
    trans = np.array([[0.0, 0.0], [0.0, 0.0], [0.5, -1.0]])
    assert crf.sentence_score(emis, [1], trans) == 2.0 - 1.0


def test_score_zero_transitions_sums_emissions(nprng):
    emis = nprng.normal(size=(4, 3))
    tags = [0, 2, 1, 1]
    assert crf.sentence_score(emis, tags, crf.zero_transitions(3)) == pytest.approx(emis[range(4), tags].sum())


def test_score_matches_loop_oracle(nprng):
    emis, trans = nprng.normal(size=(5, 3)), nprng.normal(size=(4, 3))
    tags = [2, 0, 0, 1, 2]
    assert crf.sentence_score(emis, tags, trans) == pytest.approx(brute_score(emis, tags, trans), abs=1e-12)


def test_score_errors():
    with pytest.raises(ValueError):
        crf.sentence_score(np.zeros((2, 2)), [0], np.zeros((3, 2)))
    with pytest.raises(ValueError):
        crf.sentence_score(np.zeros((2, 2)), [0, 2], np.zeros((3, 2)))
    with pytest.raises(ValueError):
        crf.sentence_score(np.zeros((2, 2)), [0, 1], np.zeros((2, 2)))


def test_log_partition_base_case(nprng):
    emis, trans = nprng.normal(size=(1, 3)), nprng.normal(size=(4, 3))
    assert crf.log_partition(emis, trans) == pytest.approx(log_sum_exp(trans[3] + emis[0]), abs=1e-12)


def test_log_partition_uniform():
    assert crf.log_partition(np.zeros((4, 3)), np.zeros((4, 3))) == pytest.approx(4 * math.log(3), abs=1e-12)


@given(lattices())
def test_log_partition_matches_enumeration(lat):
    emis, trans = lat
    _, scores = enumerate_lattice(emis, trans)
    assert abs(crf.log_partition(emis, trans) - log_sum_exp(scores)) <= 1e-8


@given(lattices())
def test_viterbi_matches_brute_force(lat):
    emis, trans = lat
    paths, scores = enumerate_lattice(emis, trans)
    res = crf.viterbi(emis, trans)
    assert len(res.tags) == emis.shape[0]
    assert abs(res.score - scores.max()) <= 1e-10
    assert res.score == crf.sentence_score(emis, res.tags, trans)


def test_viterbi_single_tag():
    assert crf.viterbi(np.ones((4, 1)), np.zeros((2, 1))).tags == [0, 0, 0, 0]


def test_viterbi_decoupled_lattice(nprng):
    emis = nprng.normal(size=(6, 4))
    assert crf.viterbi(emis, crf.zero_transitions(4)).tags == emis.argmax(axis=1).tolist()


def test_viterbi_ties_go_to_lower_index():
    assert crf.viterbi(np.zeros((3, 3)), np.zeros((4, 3))).tags == [0, 0, 0]


def test_nll_single_tag_is_zero():
    loss, de, dt = crf.nll_and_gradients(np.array([[3.0], [-1.0]]), [0, 0], np.array([[0.2], [0.7]]))
    assert loss == 0.0
    assert not de.any() and not dt.any()


@given(lattices(), st.data())
def test_nll_nonnegative_and_gradient_rows_sum_to_zero(lat, data):
    emis, trans = lat
    n, T = emis.shape
    gold = data.draw(st.lists(st.integers(0, T - 1), min_size=n, max_size=n))
    loss, de, dt = crf.nll_and_gradients(emis, gold, trans)
    assert loss >= 0.0
    np.testing.assert_allclose(de.sum(axis=1), 0.0, atol=1e-10)
    # expected minus observed counts: both total n transitions (incl. the start)
    assert dt.sum() == pytest.approx(0.0, abs=1e-9)


def test_nll_gradients_match_finite_differences(nprng):
    emis, trans = nprng.normal(size=(5, 4)), nprng.normal(size=(5, 4))
    gold = [0, 3, 3, 1, 2]
    _, de, dt = crf.nll_and_gradients(emis, gold, trans)
    h = 1e-5
    for arr, grad in ((emis, de), (trans, dt)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            lp = crf.nll_and_gradients(emis, gold, trans)[0]
            arr[idx] = old - h
            lm = crf.nll_and_gradients(emis, gold, trans)[0]
            arr[idx] = old
            num = (lp - lm) / (2 * h)
            assert abs(num - grad[idx]) / max(abs(num), abs(grad[idx]), 1e-6) <= 1e-6


def test_nll_bad_gold():
    with pytest.raises(ValueError):
        crf.nll_and_gradients(np.zeros((2, 3)), [0, 3], np.zeros((4, 3)))


def test_marginals_base_and_uniform(nprng):
    emis, trans = nprng.normal(size=(1, 3)), nprng.normal(size=(4, 3))
    np.testing.assert_allclose(crf.marginals(emis, trans)[0], softmax(trans[3] + emis[0]), atol=1e-12)
    np.testing.assert_allclose(crf.marginals(np.zeros((3, 4)), np.zeros((5, 4))), 0.25, atol=1e-12)


@given(lattices(max_n=5))
def test_marginals_match_enumeration(lat):
    emis, trans = lat
    paths, scores = enumerate_lattice(emis, trans)
    p = np.exp(scores - log_sum_exp(scores))
    n, T = emis.shape
    oracle = np.zeros((n, T))
    for path, w in zip(paths, p):
        oracle[np.arange(n), list(path)] += w
    m = crf.marginals(emis, trans)
    np.testing.assert_allclose(m, oracle, atol=1e-9)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-10)


@given(lattices(), st.data())
def test_partition_bounds_every_path(lat, data):
    emis, trans = lat
    n, T = emis.shape
    tags = data.draw(st.lists(st.integers(0, T - 1), min_size=n, max_size=n))
    assert crf.log_partition(emis, trans) >= crf.sentence_score(emis, tags, trans) - 1e-12


@given(lattices(), st.data(), st.floats(-50, 50))
def test_constant_emission_shift(lat, data, c):
    emis, trans = lat
    n, T = emis.shape
    i = data.draw(st.integers(0, n - 1))
    tags = data.draw(st.lists(st.integers(0, T - 1), min_size=n, max_size=n))
    shifted = emis.copy()
    shifted[i] += c
    assert crf.log_partition(shifted, trans) == pytest.approx(crf.log_partition(emis, trans) + c, abs=1e-9)
    assert crf.sentence_score(shifted, tags, trans) == pytest.approx(crf.sentence_score(emis, tags, trans) + c,
                                                                     abs=1e-9)
    v0, v1 = crf.viterbi(emis, trans), crf.viterbi(shifted, trans)
    assert v1.score == pytest.approx(v0.score + c, abs=1e-9)
    _, scores = enumerate_lattice(emis, trans)
    top = np.sort(scores)[::-1]
    if T ** n == 1 or top[0] - top[1] > 1e-9:  # argmax unique, so the path must not move
        assert v1.tags == v0.tags
    np.testing.assert_allclose(crf.marginals(shifted, trans), crf.marginals(emis, trans), atol=1e-9)


def test_bio_mask_blocks_illegal_decodes():
    ts = TagSet.task_a()
    emis = np.array([[0.0, 0.0, 5.0], [5.0, 0.0, 0.0]])  # wants I-DISEASE first
    trans = crf.zero_transitions(3)
    assert crf.viterbi(emis, trans).tags[0] == 2
    mask = crf.bio_mask(ts)
    assert mask[3, 2] == crf.ILLEGAL and mask[0, 2] == crf.ILLEGAL and mask[1, 2] == 0.0
    assert crf.viterbi(emis, trans + mask).tags[0] != 2
