"""Topology graph and the topology manager's forwarding-tree construction.

Trees are the union of BFS minimum-hop paths from the root.  Among parents
at equal hop distance the lexicographically smallest node id wins, so the
path to any given node does not depend on which other leaves are requested.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable

__all__ = [
    "TopologyError",
    "DisconnectedGraph",
    "InvalidTree",
    "UnknownNode",
    "TopologyGraph",
    "ForwardingTree",
    "build_tree",
    "link_key",
]


class TopologyError(ValueError):
    pass


class DisconnectedGraph(TopologyError):
    pass


class InvalidTree(TopologyError):
    pass


class UnknownNode(TopologyError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


def link_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class TopologyGraph:
    """Undirected graph with per-link latency and per-link message counters."""

    def __init__(self, nodes: Iterable[str] = (), links: Iterable[tuple[str, str, float]] = ()):
        self.nodes: set[str] = set(nodes)
        self.latency: dict[tuple[str, str], float] = {}
        self.adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        self.counters: dict[tuple[str, str], Counter] = {}
        self._bfs_cache: dict[str, tuple[dict[str, int], dict[str, str]]] = {}
        for a, b, lat in links:
            self.add_link(a, b, lat)

    def add_node(self, node: str) -> None:
        self.nodes.add(node)
        self.adj.setdefault(node, set())
        self._bfs_cache.clear()

    def add_link(self, a: str, b: str, latency: float = 1) -> None:
        if a == b:
            raise TopologyError(f"self-loop on {a}")
        if latency <= 0:
            raise TopologyError(f"link {a}-{b} latency must be > 0")
        for n in (a, b):
            self.add_node(n)
        key = link_key(a, b)
        self.latency[key] = latency
        self.counters.setdefault(key, Counter())
        self.adj[a].add(b)
        self.adj[b].add(a)
        self._bfs_cache.clear()

    def has_edge(self, a: str, b: str) -> bool:
        return link_key(a, b) in self.latency

    def link_latency(self, a: str, b: str) -> float:
        return self.latency[link_key(a, b)]

    def require(self, node: str) -> None:
        if node not in self.nodes:
            raise UnknownNode(f"unknown node {node!r}")

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        start = min(self.nodes)
        return len(self.bfs(start)[0]) == len(self.nodes)

    def check_connected(self) -> None:
        if not self.is_connected():
            start = min(self.nodes)
            missing = sorted(self.nodes - set(self.bfs(start)[0]))
            raise DisconnectedGraph(f"graph is not connected; unreachable from {start}: {missing}")

    def bfs(self, root: str) -> tuple[dict[str, int], dict[str, str]]:
        """Hop distances and tie-broken parents from ``root``."""
        self.require(root)
        cached = self._bfs_cache.get(root)
        if cached is not None:
            return cached
        dist = {root: 0}
        parent: dict[str, str] = {}
        frontier = deque([root])
        while frontier:
            u = frontier.popleft()
            for v in self.adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    parent[v] = u
                    frontier.append(v)
                elif dist[v] == dist[u] + 1 and u < parent[v]:
                    parent[v] = u
        self._bfs_cache[root] = (dist, parent)
        return dist, parent

    def hop_distance(self, a: str, b: str) -> int | None:
        return self.bfs(a)[0].get(b)

    def path(self, root: str, leaf: str) -> list[str]:
        dist, parent = self.bfs(root)
        self.require(leaf)
        if leaf not in dist:
            raise DisconnectedGraph(f"{leaf} unreachable from {root}")
        out = [leaf]
        while out[-1] != root:
            out.append(parent[out[-1]])
        return out[::-1]

    def count(self, a: str, b: str, kind: str, n: int = 1) -> None:
        self.counters[link_key(a, b)][kind] += n

    def link_counts(self) -> dict[tuple[str, str], dict[str, int]]:
        return {k: dict(sorted(c.items())) for k, c in sorted(self.counters.items())}


@dataclass(frozen=True)
class ForwardingTree:
    root: str
    edges: frozenset[tuple[str, str]]
    leaves: frozenset[str]
    _parent: dict[str, str] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", frozenset(self.edges))
        object.__setattr__(self, "leaves", frozenset(self.leaves))
        parent: dict[str, str] = {}
        for u, v in self.edges:
            if v in parent:
                raise InvalidTree(f"node {v} has two parents")
            if v == self.root:
                raise InvalidTree("edge into the root")
            parent[v] = u
        # every edge target must climb back to the root without revisiting
        for v in parent:
            seen = {v}
            u = v
            while u != self.root:
                if u not in parent:
                    raise InvalidTree(f"{v} not connected to root {self.root}")
                u = parent[u]
                if u in seen:
                    raise InvalidTree("cycle in tree")
                seen.add(u)
        for leaf in self.leaves:
            if leaf != self.root and leaf not in parent:
                raise InvalidTree(f"leaf {leaf} unreachable from root")
        object.__setattr__(self, "_parent", parent)

    def path_to(self, leaf: str) -> list[str]:
        out = [leaf]
        while out[-1] != self.root:
            out.append(self._parent[out[-1]])
        return out[::-1]

    def prune(self, leaves: Iterable[str]) -> "ForwardingTree":
        """Subtree reaching only ``leaves`` (which must be leaves of this tree)."""
        keep = frozenset(leaves)
        if not keep <= self.leaves:
            raise InvalidTree(f"cannot prune to non-leaves {sorted(keep - self.leaves)}")
        edges = set()
        for leaf in keep:
            p = self.path_to(leaf)
            edges.update(zip(p, p[1:]))
        return ForwardingTree(self.root, frozenset(edges), keep)

    def __len__(self) -> int:
        return len(self.edges)

    def describe(self) -> str:
        return f"root={self.root} leaves={','.join(sorted(self.leaves))} edges={len(self.edges)}"


def build_tree(graph: TopologyGraph, root: str, leaves: Iterable[str]) -> ForwardingTree:
    leaves = frozenset(leaves)
    graph.require(root)
    dist, parent = graph.bfs(root)
    edges: set[tuple[str, str]] = set()
    for leaf in sorted(leaves):
        graph.require(leaf)
        if leaf not in dist:
            raise DisconnectedGraph(f"{leaf} unreachable from {root}")
        v = leaf
        while v != root:
            edges.add((parent[v], v))
            v = parent[v]
    return ForwardingTree(root, frozenset(edges), leaves)
