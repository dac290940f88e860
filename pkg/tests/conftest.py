import numpy as np
import pytest

from degbias.graph import Graph

from .oracles import dense_adjacency

TRIANGLE = [(0, 1), (1, 2), (2, 0)]
PATH3 = [(0, 1), (1, 2)]
PATH4 = [(0, 1), (1, 2), (2, 3)]
STAR3 = [(0, 1), (0, 2), (0, 3)]
CYCLE6 = [(i, (i + 1) % 6) for i in range(6)]
TWO_TRIANGLES = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]


def make(edges, n=None):
    n = n or (max(max(e) for e in edges) + 1)
    return Graph.from_edges(edges, n), dense_adjacency(edges, n)


def random_connected_edges(rng, n, extra_prob):
    """Random spanning tree plus Bernoulli extra edges."""
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra_prob:
                edges.append((i, j))
    return edges


def corpus():
    """Named small graphs with N <= 64."""
    rng = np.random.default_rng(1234)
    graphs = {
        "triangle": TRIANGLE,
        "path3": PATH3,
        "path4": PATH4,
        "path9": [(i, i + 1) for i in range(8)],
        "star3": STAR3,
        "star7": [(0, k) for k in range(1, 8)],
        "cycle6": CYCLE6,
    }
    for k, (n, p) in enumerate([(12, 0.15), (24, 0.08), (40, 0.05), (64, 0.03)]):
        graphs[f"random{n}"] = random_connected_edges(rng, n, p)
    return graphs


@pytest.fixture(scope="session")
def small_corpus():
    return {name: make(edges) for name, edges in corpus().items()}


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
