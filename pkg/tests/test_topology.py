import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coapicn.icn import (
    DisconnectedGraph,
    ForwardingTree,
    InvalidTree,
    TopologyGraph,
    TopologyError,
    UnknownNode,
    build_tree,
)
from helpers import adjacency, hop_distances, min_tree_edges, random_connected_graph

SHARED_LINK = [("nap1", "f1", 1), ("nap2", "f1", 1), ("f1", "f2", 1), ("f2", "nap3", 1)]


def undirected(edges):
    return {tuple(sorted(e)) for e in edges}


class TestGraph:
    def test_latency_must_be_positive(self):
        g = TopologyGraph()
        with pytest.raises(TopologyError):
            g.add_link("a", "b", 0)

    def test_unknown_node(self):
        g = TopologyGraph(links=SHARED_LINK)
        with pytest.raises(UnknownNode):
            g.require("nowhere")

    def test_disconnected(self):
        g = TopologyGraph(["x"], SHARED_LINK)
        assert not g.is_connected()
        with pytest.raises(DisconnectedGraph):
            g.check_connected()

    def test_counters(self):
        g = TopologyGraph(links=SHARED_LINK)
        g.count("f2", "f1", "response")
        g.count("f1", "f2", "response")
        assert g.link_counts()[("f1", "f2")] == {"response": 2}

    def test_hop_distance(self):
        g = TopologyGraph(links=SHARED_LINK)
        assert g.hop_distance("nap1", "nap3") == 3
        assert g.path("nap3", "nap2") == ["nap3", "f2", "f1", "nap2"]


class TestTrees:
    def test_shared_link_tree_shares_the_core_link(self):
        g = TopologyGraph(links=SHARED_LINK)
        tree = build_tree(g, "nap3", {"nap1", "nap2"})
        assert len(tree) == 4
        assert ("f2", "f1") in tree.edges

    def test_single_leaf_tree_is_shortest_path(self):
        g = TopologyGraph(links=SHARED_LINK)
        assert len(build_tree(g, "nap3", {"nap1"})) == 3

    def test_two_parents_rejected(self):
        with pytest.raises(InvalidTree):
            ForwardingTree("r", frozenset({("r", "a"), ("b", "a"), ("r", "b")}), frozenset({"a"}))

    def test_detached_edge_rejected(self):
        with pytest.raises(InvalidTree):
            ForwardingTree("r", frozenset({("x", "y")}), frozenset({"y"}))

    def test_cycle_rejected(self):
        with pytest.raises(InvalidTree):
            ForwardingTree("r", frozenset({("a", "b"), ("b", "a")}), frozenset())

    def test_unreachable_leaf_rejected(self):
        with pytest.raises(InvalidTree):
            ForwardingTree("r", frozenset({("r", "a")}), frozenset({"z"}))

    def test_prune_requires_leaves(self):
        g = TopologyGraph(links=SHARED_LINK)
        tree = build_tree(g, "nap3", {"nap1"})
        with pytest.raises(InvalidTree):
            tree.prune({"nap2"})

    def test_against_walk_oracle(self):
        rng = random.Random(5)
        for _ in range(100):
            nodes, links = random_connected_graph(rng, rng.randint(2, 30), rng.randint(0, 20))
            g = TopologyGraph(nodes, links)
            adj = adjacency(links)
            root = rng.choice(nodes)
            leaves = set(rng.sample(nodes, rng.randint(1, len(nodes)))) - {root}
            tree = build_tree(g, root, leaves)
            assert undirected(tree.edges) == min_tree_edges(adj, root, leaves)
            dist = hop_distances(adj, root)
            for leaf in leaves:
                assert len(tree.path_to(leaf)) - 1 == dist[leaf]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_prune_equals_rebuild(self, seed):
        rng = random.Random(seed)
        nodes, links = random_connected_graph(rng, rng.randint(3, 20), rng.randint(0, 15))
        g = TopologyGraph(nodes, links)
        root = nodes[0]
        leaves = set(nodes[1:])
        subset = set(rng.sample(sorted(leaves), rng.randint(1, len(leaves))))
        assert build_tree(g, root, leaves).prune(subset) == build_tree(g, root, subset)
