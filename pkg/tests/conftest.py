import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crftagger.data import TagSet, build_vocabularies, index_corpus
from crftagger.synthetic import make_corpus
from crftagger.tensor_core import Rng

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def all_paths(n, T):
    return itertools.product(range(T), repeat=n)


def brute_score(emis, tags, trans):
    """Plain loop: start row for the first tag, then pairwise transitions."""
    T = emis.shape[1]
    total = 0.0
    prev = T
    for i, t in enumerate(tags):
        total += trans[prev, t] + emis[i, t]
        prev = t
    return total


@pytest.fixture
def task_b():
    return TagSet.ncbi_task_b()


@pytest.fixture
def tiny_corpus(task_b):
    corpus = make_corpus(Rng(5), 12, task_b)
    words, chars = build_vocabularies(corpus)
    index_corpus(corpus, words, chars)
    return corpus, words, chars


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
