"""Logical rendezvous node: advertisement/subscription matching.

The rendezvous is synchronous; every mutating call returns the publication
notifications it triggered. Latency and delivery of those notifications is
the fabric's job.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass

from .anycast import AnycastPolicy, select_anycast
from .names import NamedObjectId
from .topology import ForwardingTree, TopologyGraph, build_tree

__all__ = ["Notification", "RendezvousTable", "Rendezvous"]

Scope = tuple[bytes, ...]


@dataclass(frozen=True)
class Notification:
    """START (tree set) or STOP (tree None) publishing instruction for one publisher."""

    publisher: str
    oid: NamedObjectId
    tree: ForwardingTree | None
    epoch: int

    @property
    def is_stop(self) -> bool:
        return self.tree is None


class RendezvousTable:
    """Publisher/subscriber sets; empty sets are never stored."""

    def __init__(self) -> None:
        self.publishers: dict[NamedObjectId, dict[str, int]] = {}
        self.subscribers: dict[NamedObjectId, dict[str, int]] = {}
        self.scope_subscribers: dict[Scope, dict[str, int]] = {}
        self.anycast: set[tuple[str, NamedObjectId]] = set()

    @staticmethod
    def _add(table: dict, key, node: str, seq: int) -> bool:
        members = table.setdefault(key, {})
        if node in members:
            return False
        members[node] = seq
        return True

    @staticmethod
    def _remove(table: dict, key, node: str) -> bool:
        members = table.get(key)
        if not members or node not in members:
            return False
        del members[node]
        if not members:
            del table[key]
        return True

    def subscribers_of(self, oid: NamedObjectId) -> dict[str, int]:
        """Exact plus scope subscribers, with the earliest subscription order per node."""
        out = dict(self.subscribers.get(oid, {}))
        for node, seq in self.scope_subscribers.get(oid.scope_path, {}).items():
            out[node] = min(seq, out.get(node, seq))
        return out

    def check(self) -> None:
        for table in (self.publishers, self.subscribers, self.scope_subscribers):
            assert all(table.values()), "empty member set stored"


class Rendezvous:
    def __init__(self, graph: TopologyGraph, policy: AnycastPolicy | None = None) -> None:
        self.graph = graph
        self.policy = policy or AnycastPolicy()
        self.table = RendezvousTable()
        self._seq = itertools.count()
        self._notified: dict[NamedObjectId, tuple[str, frozenset[str]]] = {}
        self._epochs: dict[tuple[str, NamedObjectId], int] = defaultdict(int)
        self._by_scope: dict[Scope, set[NamedObjectId]] = {}

    # -- mutations -----------------------------------------------------------

    def advertise(self, node: str, oid: NamedObjectId, anycast: bool = False) -> list[Notification]:
        self.graph.require(node)
        if self.table._add(self.table.publishers, oid, node, next(self._seq)):
            self._epochs[(node, oid)] += 1
            self._by_scope.setdefault(oid.scope_path, set()).add(oid)
        if anycast:
            self.table.anycast.add((node, oid))
        else:
            self.table.anycast.discard((node, oid))
        return self.match_and_notify(oid)

    def unadvertise(self, node: str, oid: NamedObjectId) -> list[Notification]:
        if not self.table._remove(self.table.publishers, oid, node):
            return []
        self.table.anycast.discard((node, oid))
        if oid not in self.table.publishers:
            ids = self._by_scope.get(oid.scope_path)
            if ids is not None:
                ids.discard(oid)
                if not ids:
                    del self._by_scope[oid.scope_path]
        prev = self._notified.get(oid)
        if prev is not None and prev[0] == node:
            del self._notified[oid]
        return self.match_and_notify(oid)

    def subscribe(self, node: str, oid: NamedObjectId) -> list[Notification]:
        self.graph.require(node)
        if not self.table._add(self.table.subscribers, oid, node, next(self._seq)):
            return []
        return self.match_and_notify(oid)

    def unsubscribe(self, node: str, oid: NamedObjectId) -> list[Notification]:
        if not self.table._remove(self.table.subscribers, oid, node):
            return []
        return self.match_and_notify(oid)

    def subscribe_scope(self, node: str, scope: Scope) -> list[Notification]:
        self.graph.require(node)
        if not self.table._add(self.table.scope_subscribers, tuple(scope), node, next(self._seq)):
            return []
        return self._match_scope(tuple(scope))

    def unsubscribe_scope(self, node: str, scope: Scope) -> list[Notification]:
        if not self.table._remove(self.table.scope_subscribers, tuple(scope), node):
            return []
        return self._match_scope(tuple(scope))

    def _match_scope(self, scope: Scope) -> list[Notification]:
        out: list[Notification] = []
        for oid in sorted(self._by_scope.get(scope, ())):
            out.extend(self.match_and_notify(oid))
        return out

    # -- matching ------------------------------------------------------------

    def select_publisher(self, oid: NamedObjectId, subscribers) -> str:
        pubs = self.table.publishers[oid]
        return select_anycast(pubs, self.graph, sorted(subscribers) or None, self.policy, pubs)

    def match_and_notify(self, oid: NamedObjectId) -> list[Notification]:
        pubs = self.table.publishers.get(oid)
        prev = self._notified.get(oid)
        if not pubs:
            self._notified.pop(oid, None)
            return []
        subs = self.table.subscribers_of(oid)
        chosen = self.select_publisher(oid, subs)
        leaves = set(subs) - {chosen}
        if leaves and (chosen, oid) in self.table.anycast:
            order = {n: s for n, s in subs.items() if n in leaves}
            leaves = {select_anycast(leaves, self.graph, chosen, self.policy, order)}
        leaves = frozenset(leaves)
        out: list[Notification] = []
        if prev is not None and prev[0] != chosen:
            if prev[0] in pubs and prev[1]:
                out.append(Notification(prev[0], oid, None, self._epochs[(prev[0], oid)]))
            self._notified.pop(oid, None)
            prev = None
        epoch = self._epochs[(chosen, oid)]
        if not leaves:
            if prev is not None and prev[1]:
                out.append(Notification(chosen, oid, None, epoch))
                self._notified[oid] = (chosen, leaves)
            return out
        if prev == (chosen, leaves):
            return out
        self._notified[oid] = (chosen, leaves)
        out.append(Notification(chosen, oid, build_tree(self.graph, chosen, leaves), epoch))
        return out
