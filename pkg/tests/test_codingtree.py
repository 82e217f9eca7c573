"""Coding tree construction, path rates, MapSim, and tree-file round trips."""

import io
import math
import random

import pytest

from conftest import (
    TWO_COMMUNITY_MODULES,
    build_two_community_graph,
    random_connected_graph,
)
from mapsim.codingtree import (
    CodingTree,
    build_coding_tree,
    description_length,
    format_tree,
    forw_rate,
    longest_common_prefix,
    mapsim,
    parse_tree,
    parse_tree_paths,
    rev_rate,
    write_tree,
)
from mapsim.flow import visit_rates_directed, visit_rates_undirected
from mapsim.graph import Graph, ParseError, ValidationError
from mapsim.mapeq import Partition


# The published two-community coding example: module A holds nodes 1-5 with
# in-module codeword probabilities (2, 2, 3, 2, 2)/12 and exit 1/12; module
# B holds nodes 6-9 with (3, 2, 2, 2)/10 and exit 1/10; the index codebook
# enters each module at rate 1/2.
def golden_tree():
    return CodingTree.from_codebooks(
        {
            "children": [
                {
                    "enter": 0.5,
                    "exit": 1 / 12,
                    "children": [
                        {"node": 1, "prob": 2 / 12},
                        {"node": 2, "prob": 2 / 12},
                        {"node": 3, "prob": 3 / 12},
                        {"node": 4, "prob": 2 / 12},
                        {"node": 5, "prob": 2 / 12},
                    ],
                },
                {
                    "enter": 0.5,
                    "exit": 1 / 10,
                    "children": [
                        {"node": 6, "prob": 3 / 10},
                        {"node": 7, "prob": 2 / 10},
                        {"node": 8, "prob": 2 / 10},
                        {"node": 9, "prob": 2 / 10},
                    ],
                },
            ]
        }
    )


class TestGoldenExample:
    def test_intra_module_transition_costs_two_bits(self):
        tree = golden_tree()
        assert mapsim(tree, 5, 3) == 3 / 12
        assert description_length(tree, 5, 3) == 2.0

    def test_inter_module_transition(self):
        tree = golden_tree()
        assert abs(mapsim(tree, 5, 7) - 1 / 120) < 1e-18
        assert abs(description_length(tree, 5, 7) - math.log2(120)) < 1e-12
        assert f"{description_length(tree, 5, 7):.6f}" == "6.906891"

    def test_rebuilt_from_graph_flow_matches_golden_probabilities(self):
        g = build_two_community_graph()
        fl = visit_rates_undirected(g)
        tree = build_coding_tree(fl, Partition.two_level(TWO_COMMUNITY_MODULES))
        a, b = tree.root.children
        assert abs(a.exit_prob - 1 / 12) < 1e-15
        assert abs(a.codeword_prob - 0.5) < 1e-15
        assert abs(b.codeword_prob - 0.5) < 1e-15
        node3 = a.children[2]
        assert node3.node_id == 3
        assert abs(node3.codeword_prob - 3 / 12) < 1e-15
        node7 = b.children[1]
        assert node7.node_id == 7
        assert abs(node7.codeword_prob - 2 / 10) < 1e-15
        assert mapsim(tree, 5, 3) == 0.25
        assert abs(mapsim(tree, 5, 7) - 1 / 120) < 1e-16


class TestAddresses:
    def test_one_module_tree_flat_addresses(self):
        g = Graph.from_edges([(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)])
        fl = visit_rates_undirected(g)
        tree = build_coding_tree(fl, Partition.one_module(g.nodes))
        assert tree.addr(3) == (3,)
        assert tree.root.exit_prob == 0.0

    def test_two_level_positions(self):
        tree = golden_tree()
        assert tree.addr(7) == (2, 2)
        assert tree.addr(1) == (1, 1)

    def test_addresses_injective(self):
        tree = golden_tree()
        addrs = [tree.addr(u) for u in tree.node_ids]
        assert len(set(addrs)) == len(addrs)

    def test_unknown_node_rejected(self):
        with pytest.raises(KeyError):
            golden_tree().addr(42)


class TestLongestCommonPrefix:
    def test_shared_head(self):
        assert longest_common_prefix((1, 2), (1, 3)) == (1,)

    def test_nothing_shared(self):
        assert longest_common_prefix((1, 2), (2, 1)) == ()

    def test_deep_share(self):
        assert longest_common_prefix((1, 1, 2), (1, 1, 3)) == (1, 1)

    def test_prefix_containment_backs_off(self):
        assert longest_common_prefix((1, 2), (1, 2, 3)) == (1,)

    def test_identical_rejected(self):
        with pytest.raises(ValidationError):
            longest_common_prefix((1, 2), (1, 2))


class TestPathRates:
    def test_rev_single_hop_is_free(self):
        tree = golden_tree()
        module_a = tree.subtree((1,))
        assert rev_rate(module_a, (5,)) == 1.0

    def test_rev_from_root_uses_exit(self):
        tree = golden_tree()
        assert rev_rate(tree.root, (1, 5)) == 1 / 12

    def test_forw_within_module(self):
        tree = golden_tree()
        assert forw_rate(tree.subtree((1,)), (3,)) == 3 / 12

    def test_forw_from_root(self):
        tree = golden_tree()
        assert abs(forw_rate(tree.root, (2, 2)) - 0.1) < 1e-16

    def test_three_level_products(self):
        tree = CodingTree.from_codebooks(
            {
                "children": [
                    {
                        "enter": 0.5,
                        "exit": 0.25,
                        "children": [
                            {
                                "enter": 0.25,
                                "exit": 0.5,
                                "children": [{"node": 1, "prob": 0.5}],
                            },
                            {"node": 2, "prob": 0.5},
                        ],
                    },
                    {"node": 3, "prob": 0.5},
                ]
            }
        )
        # Reverse: exit the inner module (0.5), then the outer one (0.25).
        assert rev_rate(tree.root, (1, 1, 1)) == 0.25 * 0.5
        assert forw_rate(tree.root, (1, 1, 1)) == 0.5 * 0.25 * 0.5

    def test_forward_mass_bounded_by_one(self):
        rng = random.Random(4)
        g = None
        while g is None:
            g = random_connected_graph(rng, max_nodes=12)
        fl = visit_rates_undirected(g)
        modules = {u: rng.randint(1, 3) for u in g.nodes}
        tree = build_coding_tree(fl, Partition.two_level(modules))
        total = sum(forw_rate(tree.root, tree.addr(v)) for v in tree.node_ids)
        assert total <= 1.0 + 1e-12

    def test_invalid_addresses_rejected(self):
        tree = golden_tree()
        with pytest.raises(ValidationError):
            rev_rate(tree.root, (3, 1))
        with pytest.raises(ValidationError):
            forw_rate(tree.root, (1,))  # stops at a module, not a leaf
        with pytest.raises(ValidationError):
            forw_rate(tree.root, (1, 1, 1))  # descends through a leaf


class TestMapsim:
    def test_defined_for_unlinked_pairs(self):
        tree = golden_tree()
        # No link between 1 and 9 exists; the coding scheme still prices it.
        assert 0 < mapsim(tree, 1, 9) < 1

    def test_asymmetry(self):
        tree = golden_tree()
        # Within a module: different visit rates give different directions.
        assert mapsim(tree, 5, 3) == 3 / 12
        assert mapsim(tree, 3, 5) == 2 / 12
        # Across modules: exit and visit rates differ between A and B. (The
        # (5, 7) pair is coincidentally symmetric: 1/12 * 2/10 = 1/10 * 2/12.)
        assert mapsim(tree, 5, 6) == pytest.approx(1 / 12 * 0.5 * 3 / 10)
        assert mapsim(tree, 6, 5) == pytest.approx(1 / 10 * 0.5 * 2 / 12)
        assert mapsim(tree, 5, 6) != mapsim(tree, 6, 5)

    def test_self_pair_rejected(self):
        with pytest.raises(ValidationError):
            mapsim(golden_tree(), 5, 5)

    def test_one_module_tree_equals_visit_rate(self):
        g = build_two_community_graph()
        fl = visit_rates_undirected(g)
        tree = build_coding_tree(fl, Partition.one_module(g.nodes))
        for u in g.nodes:
            for v in g.nodes:
                if u == v:
                    continue
                assert abs(mapsim(tree, u, v) - fl.node_visit_rates[v]) < 1e-15

    def test_one_module_ranking_is_preferential_attachment(self):
        rng = random.Random(11)
        done = 0
        while done < 5:
            g = random_connected_graph(rng, max_nodes=12, directed=done % 2 == 1)
            if g is None:
                continue
            fl = visit_rates_directed(g) if g.directed else visit_rates_undirected(g)
            tree = build_coding_tree(fl, Partition.one_module(g.nodes))
            by_rate = sorted(g.nodes, key=lambda v: (-fl.node_visit_rates[v], v))
            for u in g.nodes:
                ranking = sorted(
                    (v for v in g.nodes if v != u),
                    key=lambda v: (-mapsim(tree, u, v), v),
                )
                assert ranking == [v for v in by_rate if v != u]
            done += 1

    def test_in_module_scores_sum_to_one(self):
        # Fixing the source, similarity mass inside one module plus the exit
        # codeword plus the source's own codeword is exactly the codebook.
        tree = golden_tree()
        module_a = tree.subtree((1,))
        u = 5
        total = sum(mapsim(tree, u, v) for v in (1, 2, 3, 4))
        total += module_a.exit_prob
        total += next(c.codeword_prob for c in module_a.children if c.node_id == u)
        assert abs(total - 1.0) < 1e-12

    def test_similarity_in_unit_interval(self):
        tree = golden_tree()
        for u in tree.node_ids:
            for v in tree.node_ids:
                if u != v:
                    assert 0 <= mapsim(tree, u, v) <= 1

    def test_zero_exit_region_gives_infinite_length(self):
        tree = CodingTree.from_codebooks(
            {
                "children": [
                    {
                        "enter": 0.5,
                        "exit": 0.0,
                        "children": [{"node": 1, "prob": 0.5}, {"node": 2, "prob": 0.5}],
                    },
                    {"node": 3, "prob": 0.5},
                ]
            }
        )
        assert mapsim(tree, 1, 3) == 0.0
        assert description_length(tree, 1, 3) == math.inf
        assert description_length(tree, 1, 2) == 1.0

    def test_deep_tree_products_survive_underflow(self):
        # 40 nested levels of tiny enter rates: the plain float product would
        # underflow to zero around 2**-1074; log space keeps it positive.
        tiny = 1e-10
        spec = {"node": 1, "prob": tiny}
        filler = iter(range(100, 200))
        for _ in range(40):
            spec = {
                "enter": tiny,
                "exit": 0.5,
                "children": [spec, {"node": next(filler), "prob": 0.5 - tiny}],
            }
        spec = {"children": [spec, {"node": 99, "prob": 0.5}]}
        spec["children"][0]["enter"] = 0.5
        tree = CodingTree.from_codebooks(spec)
        # 41 factors at ~33 bits each: ~1330 bits, far below float64's range
        # in linear scale. The similarity underflows to the nearest float (0)
        # but the description length stays finite and exact in log space.
        expected_bits = -math.log2(0.5) - 40 * math.log2(tiny)
        assert mapsim(tree, 99, 1) == 0.0
        bits = description_length(tree, 99, 1)
        assert bits != math.inf
        assert abs(bits - expected_bits) < 1e-6
        # A structurally impossible path is still infinite.
        assert description_length(tree, 1, 99) != math.inf  # exits are 0.5 each
        zero_exit = CodingTree.from_codebooks(
            {
                "children": [
                    {"enter": 0.5, "exit": 0.0,
                     "children": [{"node": 1, "prob": 1.0}]},
                    {"node": 2, "prob": 0.5},
                ]
            }
        )
        assert description_length(zero_exit, 1, 2) == math.inf


class TestCodebookNormalization:
    def test_every_codebook_sums_to_one(self):
        rng = random.Random(21)
        done = 0
        while done < 8:
            g = random_connected_graph(rng, max_nodes=15, directed=done % 2 == 0)
            if g is None:
                continue
            fl = visit_rates_directed(g) if g.directed else visit_rates_undirected(g)
            modules = {u: rng.randint(1, 4) for u in g.nodes}
            tree = build_coding_tree(fl, Partition.two_level(modules))
            stack = [tree.root]
            while stack:
                node = stack.pop()
                if node.is_leaf:
                    continue
                total = node.exit_prob + sum(c.codeword_prob for c in node.children)
                assert abs(total - 1.0) < 1e-9
                stack.extend(node.children)
            assert tree.root.exit_prob == 0.0
            done += 1

    def test_inconsistent_codebook_rejected(self):
        with pytest.raises(ValidationError):
            CodingTree.from_codebooks(
                {"children": [{"node": 1, "prob": 0.4}, {"node": 2, "prob": 0.4}]}
            )


class TestTreeFiles:
    def test_write_format(self):
        g = build_two_community_graph()
        fl = visit_rates_undirected(g)
        tree = build_coding_tree(fl, Partition.two_level(TWO_COMMUNITY_MODULES))
        text = format_tree(tree)
        assert '2:2 0.1 "7" 7' in text.splitlines()

    def test_round_trip_preserves_addresses_and_rates(self):
        g = build_two_community_graph()
        fl = visit_rates_undirected(g)
        tree = build_coding_tree(fl, Partition.two_level(TWO_COMMUNITY_MODULES))
        again = parse_tree(format_tree(tree), fl)
        for u in tree.node_ids:
            assert tree.addr(u) == again.addr(u)
        assert format_tree(again) == format_tree(tree)

    def test_three_level_file(self):
        text = "\n".join(
            [
                "# header",
                '1:1:1 0.2 "1" 1',
                '1:1:2 0.2 "2" 2',
                '1:2 0.2 "3" 3',
                '2:1 0.2 "4" 4',
                '2:2 0.2 "5" 5',
            ]
        )
        paths = parse_tree_paths(text)
        assert paths[1] == (1, 1, 1)
        g = Graph.from_edges(
            [(1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0), (1, 5, 1.0)]
        )
        fl = visit_rates_undirected(g)
        tree = parse_tree(text, fl)
        assert tree.addr(1) == (1, 1, 1)
        assert tree.addr(5) == (2, 2)

    def test_malformed_line_reports_number(self):
        with pytest.raises(ParseError) as exc:
            parse_tree_paths('1:1 0.5 "1" 1\nbroken line\n')
        assert exc.value.lineno == 2

    def test_duplicate_node_rejected(self):
        with pytest.raises(ParseError):
            parse_tree_paths('1:1 0.5 "1" 7\n1:2 0.5 "2" 7\n')

    def test_inconsistent_paths_rejected(self):
        with pytest.raises(ParseError):
            parse_tree_paths('1:1 0.5 "1" 1\n1:1:2 0.3 "2" 2\n')
        with pytest.raises(ParseError):
            parse_tree_paths('1:0 0.5 "1" 1\n')

    def test_coverage_mismatch_rejected(self):
        g = Graph.from_edges([(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)])
        fl = visit_rates_undirected(g)
        with pytest.raises(ValidationError):
            parse_tree('1 0.5 "1" 1\n2 0.5 "2" 2\n', fl)
