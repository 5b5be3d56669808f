import numpy as np
import pytest

from a3gcn.config import SBM_DEFAULTS
from a3gcn.data import generate_sbm
from a3gcn.rng import Stream, make_rng


def random_edges(n, m, rng):
    """Up to ``m`` distinct canonical edges on ``n`` nodes."""
    pairs = set()
    tries = 0
    while len(pairs) < m and tries < 50 * m + 10:
        u, v = rng.integers(0, n, size=2)
        tries += 1
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def dense_adjacency(n, edges):
    a = np.zeros((n, n))
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    return a


def dense_normalized(n, edges):
    a = dense_adjacency(n, edges) + np.eye(n)
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


@pytest.fixture(scope="session")
def sbm_fixture():
    spec = dict(SBM_DEFAULTS)
    seed = spec.pop("seed")
    return generate_sbm(rng=make_rng(seed, Stream.SBM), **spec)


@pytest.fixture(scope="session")
def small_sbm():
    return generate_sbm(120, 3, 0.15, 0.01, 12, 0.5, make_rng(5, Stream.SBM))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
