import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from banded_markov.banded_core import from_rows, generator  # noqa: E402
from banded_markov.corpus import CorpusConfig, bidiagonal_product, corpus  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CORPUS_CONFIG = CorpusConfig(size=60, max_size=101)
CORPUS_SEED = 2024


@pytest.fixture(scope="session")
def two_by_two():
    return from_rows(1, 1, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])


@pytest.fixture(scope="session")
def substochastic_two():
    return from_rows(1, 1, [[2 / 3, 1 / 3], [1 / 3, 1 / 3]], mode="substochastic")


@pytest.fixture(scope="session")
def matrix_corpus():
    return corpus(24, seed=CORPUS_SEED, cfg=CORPUS_CONFIG)


@pytest.fixture(scope="session")
def symmetric_tail():
    return generator(1, 1, [[2 / 3, 1 / 3]], [[1 / 3, 1 / 3, 1 / 3]])


@pytest.fixture(scope="session")
def biased_tail():
    return generator(1, 1, [[0.3, 0.7]], [[0.1, 0.2, 0.7]])


@st.composite
def product_matrices(draw, max_p=3, max_q=3, min_size=4, max_size=24):
    """Exact stochastic products of random stochastic bidiagonal factors."""
    p = draw(st.integers(1, max_p))
    q = draw(st.integers(1, max_q))
    size = draw(st.integers(max(min_size, p + q + 1), max_size))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    return bidiagonal_product(p, q, rng, CorpusConfig(size=size))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.REPORT:
        terminalreporter.write_line(line)
