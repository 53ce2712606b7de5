"""Message fabric: rendezvous control traffic and tree-based data delivery.

Control messages to and from the logical rendezvous node take a fixed
latency and are counted separately; they never occupy topology links.
Data publications are charged one message per tree edge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

from .names import NamedObjectId
from .rendezvous import Notification, Rendezvous
from .scheduler import EventLog, Scheduler
from .topology import ForwardingTree, InvalidTree, TopologyGraph, build_tree

log = logging.getLogger(__name__)

__all__ = ["FabricNode", "Publication", "Fabric"]


class FabricNode(Protocol):
    def on_notify(self, note: Notification) -> None: ...

    def on_object(self, oid: NamedObjectId, payload: bytes, origin: str, kind: str) -> None: ...


@dataclass(frozen=True)
class Publication:
    time: float
    root: str
    oid: NamedObjectId
    kind: str
    leaves: frozenset[str]
    edges: int
    tag: str = ""


@dataclass
class FabricStats:
    control_messages: int = 0
    publications: list[Publication] = field(default_factory=list)
    deliveries: int = 0
    expected_deliveries: int = 0


class Fabric:
    def __init__(
        self,
        scheduler: Scheduler,
        graph: TopologyGraph,
        rendezvous: Rendezvous,
        event_log: EventLog,
        rv_latency: float = 1,
    ) -> None:
        self.sched = scheduler
        self.graph = graph
        self.rv = rendezvous
        self.log = event_log
        self.rv_latency = rv_latency
        self.nodes: dict[str, FabricNode] = {}
        self.stats = FabricStats()

    def attach(self, node: str, handler: FabricNode) -> None:
        self.graph.require(node)
        self.nodes[node] = handler

    # -- rendezvous control ----------------------------------------------------

    def _control(self, node: str, op: str, target, *args) -> None:
        self.graph.require(node)
        self.stats.control_messages += 1
        label = target if isinstance(target, NamedObjectId) else "/".join(s.hex()[:4] for s in target)
        self.log.add(self.sched.now, node, f"rv.{op}.tx", label)
        self.sched.after(self.rv_latency, self._rv_process, node, op, target, args)

    def _rv_process(self, node: str, op: str, target, args: tuple) -> None:
        notes = getattr(self.rv, op)(node, target, *args)
        for note in notes:
            self.stats.control_messages += 1
            detail = "STOP" if note.is_stop else note.tree.describe()
            self.log.add(self.sched.now, "rv", "rv.notify", note.oid, f"to={note.publisher} epoch={note.epoch} {detail}")
            self.sched.after(self.rv_latency, self._deliver_notice, note)

    def _deliver_notice(self, note: Notification) -> None:
        handler = self.nodes.get(note.publisher)
        if handler is not None:
            handler.on_notify(note)

    def advertise(self, node: str, oid: NamedObjectId, anycast: bool = False) -> None:
        self._control(node, "advertise", oid, anycast)

    def unadvertise(self, node: str, oid: NamedObjectId) -> None:
        self._control(node, "unadvertise", oid)

    def subscribe(self, node: str, oid: NamedObjectId) -> None:
        self._control(node, "subscribe", oid)

    def unsubscribe(self, node: str, oid: NamedObjectId) -> None:
        self._control(node, "unsubscribe", oid)

    def subscribe_scope(self, node: str, scope: tuple[bytes, ...]) -> None:
        self._control(node, "subscribe_scope", tuple(scope))

    def unsubscribe_scope(self, node: str, scope: tuple[bytes, ...]) -> None:
        self._control(node, "unsubscribe_scope", tuple(scope))

    # -- data ------------------------------------------------------------------

    def publish_data(
        self,
        origin: str,
        tree: ForwardingTree,
        payload: bytes,
        oid: NamedObjectId,
        kind: str = "data",
        tag: str = "",
    ) -> Publication:
        if origin != tree.root:
            raise InvalidTree(f"publisher {origin} is not the tree root {tree.root}")
        for a, b in tree.edges:
            if not self.graph.has_edge(a, b):
                raise InvalidTree(f"tree edge {a}->{b} not in topology")
        now = self.sched.now
        for a, b in sorted(tree.edges):
            self.graph.count(a, b, kind)
        pub = Publication(now, origin, oid, kind, tree.leaves, len(tree.edges), tag)
        self.stats.publications.append(pub)
        self.stats.expected_deliveries += len(tree.leaves)
        self.log.add(now, origin, "fabric.publish", oid, f"kind={kind} {tree.describe()}" + (f" tag={tag}" if tag else ""))
        for leaf in sorted(tree.leaves):
            path = tree.path_to(leaf)
            delay = sum(self.graph.link_latency(a, b) for a, b in zip(path, path[1:]))
            self.sched.at(now + delay, self._deliver, leaf, oid, payload, origin, kind)
        return pub

    def send(self, origin: str, dest: str, payload: bytes, oid: NamedObjectId, kind: str, tag: str = "") -> Publication:
        """Unicast along the topology manager's single-leaf tree."""
        return self.publish_data(origin, build_tree(self.graph, origin, {dest}), payload, oid, kind, tag)

    def _deliver(self, leaf: str, oid: NamedObjectId, payload: bytes, origin: str, kind: str) -> None:
        self.stats.deliveries += 1
        self.log.add(self.sched.now, leaf, "fabric.deliver", oid, f"kind={kind} from={origin} bytes={len(payload)}")
        handler = self.nodes.get(leaf)
        if handler is None:
            log.warning("delivery to %s which has no handler", leaf)
            return
        handler.on_object(oid, payload, origin, kind)
