"""Anycast selection policies used by the rendezvous and NAPs."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping

from .topology import TopologyGraph

__all__ = ["EmptyCandidates", "PolicyKind", "AnycastPolicy", "select_anycast"]


class EmptyCandidates(ValueError):
    pass


class PolicyKind(enum.Enum):
    MIN_HOP = "min_hop"
    FIRST_ADVERTISER = "first_advertiser"


@dataclass(frozen=True)
class AnycastPolicy:
    kind: PolicyKind = PolicyKind.MIN_HOP
    # ties always resolve to the lexicographically smallest node id
    tie_break: str = "lexicographic"

    @classmethod
    def parse(cls, name: str) -> "AnycastPolicy":
        return cls(PolicyKind(name.lower()))


def select_anycast(
    candidates: Iterable[str],
    graph: TopologyGraph,
    requester: str | Iterable[str] | None,
    policy: AnycastPolicy,
    order: Mapping[str, int] | None = None,
) -> str:
    """Pick exactly one candidate.

    MIN_HOP ranks by hop distance to ``requester``; when several requesters
    are given the distances are summed. FIRST_ADVERTISER ranks by ``order``
    (lower = earlier), unknown candidates last.
    """
    cands = sorted(set(candidates))
    if not cands:
        raise EmptyCandidates("no anycast candidates")
    if policy.kind is PolicyKind.MIN_HOP:
        if requester is None:
            return cands[0]
        targets = [requester] if isinstance(requester, str) else sorted(set(requester))
        if not targets:
            return cands[0]
        inf = float("inf")

        def cost(c: str) -> float:
            dist = graph.bfs(c)[0]
            return sum(dist.get(t, inf) for t in targets)

        return min(cands, key=lambda c: (cost(c), c))
    order = order or {}
    return min(cands, key=lambda c: (order.get(c, float("inf")), c))
