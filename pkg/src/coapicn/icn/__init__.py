"""Publish/subscribe ICN core: names, rendezvous, topology manager and fabric."""

from .anycast import AnycastPolicy, EmptyCandidates, PolicyKind, select_anycast
from .fabric import Fabric, FabricNode, Publication
from .names import DIGEST_ALGORITHM, NamedObjectId, digest8, digest32, scope
from .rendezvous import Notification, Rendezvous, RendezvousTable
from .scheduler import EventLog, LogRecord, Scheduler
from .topology import (
    DisconnectedGraph,
    ForwardingTree,
    InvalidTree,
    TopologyError,
    TopologyGraph,
    UnknownNode,
    build_tree,
    link_key,
)

__all__ = [
    "AnycastPolicy",
    "EmptyCandidates",
    "PolicyKind",
    "select_anycast",
    "DIGEST_ALGORITHM",
    "DisconnectedGraph",
    "EventLog",
    "Fabric",
    "FabricNode",
    "ForwardingTree",
    "InvalidTree",
    "LogRecord",
    "NamedObjectId",
    "Notification",
    "Publication",
    "Rendezvous",
    "RendezvousTable",
    "Scheduler",
    "TopologyError",
    "TopologyGraph",
    "UnknownNode",
    "build_tree",
    "digest32",
    "digest8",
    "link_key",
    "scope",
]
