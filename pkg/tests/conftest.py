"""Shared builders for the test suite."""

import random

import pytest

from mapsim.graph import Graph


# Two five-cliques joined by a single bridge edge: the canonical strongly
# modular test graph whose optimal two-level partition is the two cliques.
def build_two_cliques(size=5):
    edges = []
    for base in (0, size):
        for i in range(size):
            for j in range(i + 1, size):
                edges.append((base + i, base + j, 1.0))
    edges.append((size - 1, size, 1.0))
    return Graph.from_edges(edges, directed=False)


# Nine-node graph with two communities whose coding tree carries the
# codebook probabilities 3/12 (node 3 in A), 1/12 (exit A), 1/2 (enter B),
# and 2/10 (node 7 in B): a 5-cycle, a 4-node cluster, and one bridge.
FIG_EDGES = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1),
             (3, 7), (6, 7), (6, 8), (6, 9), (8, 9)]


def build_two_community_graph():
    return Graph.from_edges([(u, v, 1.0) for u, v in FIG_EDGES], directed=False)


TWO_COMMUNITY_MODULES = {u: (1 if u <= 5 else 2) for u in range(1, 10)}


def random_connected_graph(rng: random.Random, max_nodes=12, directed=False,
                           weighted=True, p_edge=0.45):
    """A random graph restricted to its largest component; None if too small."""
    from mapsim.graph import largest_weakly_connected_component

    n = rng.randint(3, max_nodes)
    edges = []
    for i in range(n):
        for j in range(n):
            if i == j or (not directed and j <= i):
                continue
            if rng.random() < p_edge:
                w = rng.choice([0.5, 1.0, 2.0]) if weighted else 1.0
                edges.append((i, j, w))
    if not edges:
        return None
    g = largest_weakly_connected_component(Graph.from_edges(edges, directed=directed))
    if g.num_nodes < 3 or g.num_edges < 2:
        return None
    return g


def ring_of_cliques(n_cliques=6, size=5):
    """Cliques joined in a ring: strong, unambiguous community structure."""
    edges = []
    for c in range(n_cliques):
        base = c * size
        for i in range(size):
            for j in range(i + 1, size):
                edges.append((base + i, base + j, 1.0))
        nxt = ((c + 1) % n_cliques) * size
        edges.append((base + size - 1, nxt, 1.0))
    return Graph.from_edges(edges)


@pytest.fixture
def two_cliques():
    return build_two_cliques()


@pytest.fixture
def two_community_graph():
    return build_two_community_graph()
