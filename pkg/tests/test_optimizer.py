"""Greedy search: incremental deltas against full recomputation, and optima."""

import itertools
import random

import pytest

from conftest import build_two_cliques, random_connected_graph
from mapsim.flow import visit_rates_directed, visit_rates_undirected
from mapsim.graph import Graph, ValidationError, generate_crossed_k_regular
from mapsim.mapeq import Partition, codelength, entropy
from mapsim.optimizer import SearchState, delta_codelength_move, optimize_two_level


def all_set_partitions(items):
    """Every partition of `items` into nonempty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for blocks in all_set_partitions(rest):
        for i in range(len(blocks)):
            yield blocks[:i] + [blocks[i] + [first]] + blocks[i + 1:]
        yield blocks + [[first]]


def brute_force_minimum(flow, nodes):
    """Exhaustive two-level search; the slow but unarguable oracle."""
    best = None
    for blocks in all_set_partitions(list(nodes)):
        if len(blocks) == 1:
            part = Partition.one_module(nodes)
        else:
            part = Partition.two_level(
                {u: i + 1 for i, block in enumerate(blocks) for u in block}
            )
        bits = codelength(flow, part)
        if best is None or bits < best:
            best = bits
    return best


def flow_of(g):
    return visit_rates_directed(g) if g.directed else visit_rates_undirected(g)


class TestDeltaMove:
    def test_noop_move_is_zero(self, two_cliques):
        state = SearchState(flow_of(two_cliques))
        assert state.delta_move(0, 0) == 0.0

    def test_unknown_node_and_module_rejected(self, two_cliques):
        state = SearchState(flow_of(two_cliques))
        with pytest.raises(KeyError):
            state.delta_move(999, 0)
        with pytest.raises(KeyError):
            state.delta_move(0, 999)

    def test_matches_full_recomputation(self):
        # Random moves from random states on random graphs, directed and
        # undirected: the incremental delta must equal the difference of two
        # from-scratch codelengths.
        rng = random.Random(101)
        checked = 0
        while checked < 400:
            g = random_connected_graph(rng, max_nodes=10, directed=rng.random() < 0.5)
            if g is None:
                continue
            flow = flow_of(g)
            nodes = list(g.nodes)
            assignment = {u: rng.choice(nodes) for u in nodes}
            state = SearchState(flow, assignment)
            for _ in range(10):
                node = rng.choice(nodes)
                target = rng.choice([None, *state.assignment.values()])
                delta = state.delta_move(node, target)
                before = codelength(flow, state.partition())
                clone = SearchState(flow, state.assignment)
                clone.apply_move(node, target)
                after = codelength(flow, clone.partition())
                assert delta == pytest.approx(after - before, abs=1e-9)
                checked += 1

    def test_new_empty_module_semantics(self, two_cliques):
        flow = flow_of(two_cliques)
        state = SearchState(flow, {u: 1 for u in two_cliques.nodes})
        delta = state.delta_move(0, None)
        state.apply_move(0, None)
        assert state.module_count() == 2
        assert state.codelength == pytest.approx(
            codelength(flow, state.partition()), abs=1e-9
        )
        assert delta == pytest.approx(state.recompute_codelength() -
                                      codelength(flow, Partition.two_level({u: 1 for u in two_cliques.nodes})),
                                      abs=1e-9)

    def test_gathering_move_is_negative(self):
        # One node stranded away from its clique: pulling it back must help.
        g = build_two_cliques()
        flow = flow_of(g)
        assignment = {u: (1 if u < 5 else 2) for u in g.nodes}
        assignment[0] = 3
        state = SearchState(flow, assignment)
        assert state.delta_move(0, 1) < 0

    def test_cached_codelength_tracks_recompute_through_many_moves(self):
        rng = random.Random(55)
        g = None
        while g is None:
            g = random_connected_graph(rng, max_nodes=12)
        flow = flow_of(g)
        state = SearchState(flow)
        nodes = list(g.nodes)
        for _ in range(200):
            node = rng.choice(nodes)
            target = rng.choice([None, *set(state.assignment.values())])
            state.apply_move(node, target)
            assert state.codelength == pytest.approx(state.recompute_codelength(), abs=1e-9)


class TestOptimize:
    def test_two_cliques_found_exactly(self, two_cliques):
        flow = flow_of(two_cliques)
        part, bits = optimize_two_level(flow, seed=7, trials=10)
        groups = {}
        for u, path in part.paths.items():
            groups.setdefault(path[0], set()).add(u)
        assert sorted(groups.values(), key=min) == [set(range(5)), set(range(5, 10))]
        assert bits == pytest.approx(brute_force_minimum(flow, two_cliques.nodes), abs=1e-9)

    def test_triangle_collapses_to_one_module(self):
        g = Graph.from_edges([(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)])
        flow = flow_of(g)
        part, bits = optimize_two_level(flow, seed=1, trials=5)
        assert part.top_module_count() == 1
        assert bits == pytest.approx(brute_force_minimum(flow, g.nodes), abs=1e-9)
        assert bits == pytest.approx(entropy(flow.node_visit_rates.values()), abs=1e-12)

    def test_matches_brute_force_on_small_graphs(self):
        rng = random.Random(202)
        solved = 0
        while solved < 12:
            g = random_connected_graph(rng, max_nodes=7, directed=rng.random() < 0.4)
            if g is None:
                continue
            flow = flow_of(g)
            reference = brute_force_minimum(flow, g.nodes)
            _, bits = optimize_two_level(flow, seed=solved, trials=30)
            assert bits >= reference - 1e-9
            assert bits == pytest.approx(reference, abs=1e-9)
            solved += 1

    def test_never_above_one_module_or_singletons(self):
        rng = random.Random(303)
        done = 0
        while done < 8:
            g = random_connected_graph(rng, max_nodes=14, directed=done % 2 == 0)
            if g is None:
                continue
            flow = flow_of(g)
            _, bits = optimize_two_level(flow, seed=done, trials=5)
            one = codelength(flow, Partition.one_module(g.nodes))
            singles = codelength(flow, Partition.two_level({u: u for u in g.nodes}))
            assert bits <= one + 1e-12
            assert bits <= singles + 1e-12
            done += 1

    def test_determinism(self, two_cliques):
        flow = flow_of(two_cliques)
        a = optimize_two_level(flow, seed=5, trials=8)
        b = optimize_two_level(flow, seed=5, trials=8)
        assert a[0] == b[0]
        assert a[1] == b[1]

    def test_returned_codelength_matches_partition(self, two_cliques):
        flow = flow_of(two_cliques)
        part, bits = optimize_two_level(flow, seed=3, trials=5)
        assert bits == pytest.approx(codelength(flow, part), abs=1e-9)

    def test_trials_below_one_rejected(self, two_cliques):
        with pytest.raises(ValidationError):
            optimize_two_level(flow_of(two_cliques), seed=1, trials=0)


class TestPlantedStructure:
    def test_crossed_regular_modules_refine_the_halves(self):
        # At degree 4 the two-level optimum fragments each 50-node half into
        # smaller blocks (sparse random graphs compress better that way), but
        # every detected module stays inside one planted half.
        g = generate_crossed_k_regular(100, 4, seed=0)
        flow = flow_of(g)
        part, bits = optimize_two_level(flow, seed=0, trials=20)
        planted = codelength(
            flow, Partition.two_level({u: (1 if u < 50 else 2) for u in g.nodes})
        )
        assert bits <= planted + 1e-12
        for module in {p[0] for p in part.paths.values()}:
            members = {u for u, p in part.paths.items() if p[0] == module}
            sides = {u < 50 for u in members}
            assert len(sides) == 1

    def test_crossed_regular_recovers_halves_at_higher_degree(self):
        # With denser halves the planted bipartition is the optimum and the
        # search recovers it exactly.
        hits = 0
        for seed in range(5):
            g = generate_crossed_k_regular(100, 8, seed=seed)
            part, _ = optimize_two_level(flow_of(g), seed=seed, trials=10)
            groups = {}
            for u, path in part.paths.items():
                groups.setdefault(path[0], set()).add(u)
            if sorted(groups.values(), key=min) == [set(range(50)), set(range(50, 100))]:
                hits += 1
        assert hits == 5
