"""Shared test utilities: golden-vector parsing and independent graph oracles."""

from __future__ import annotations

from collections import deque
from pathlib import Path

from coapicn.coap import CoapMessage, MsgType, code_str

VECTORS = Path(__file__).parent / "vectors" / "coap_golden.txt"
SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

# PASS/FAIL lines from the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def describe(msg: CoapMessage) -> str:
    opts = ",".join(f"{n}:{v.hex()}" for n, v in msg.options) or "-"
    return (
        f"{MsgType(msg.msg_type).name} {code_str(msg.code)} mid={msg.message_id:04x} "
        f"tok={msg.token.hex() or '-'} opts={opts} payload={msg.payload.hex() or '-'}"
    )


def golden_vectors() -> tuple[list[tuple[bytes, str]], list[tuple[bytes, str]]]:
    valid, malformed = [], []
    for line in VECTORS.read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        raw, _, desc = line.partition(" -> ")
        if desc.startswith("MALFORMED"):
            malformed.append((bytes.fromhex(raw), desc[len("MALFORMED "):]))
        else:
            valid.append((bytes.fromhex(raw), desc))
    return valid, malformed


def adjacency(links) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for a, b, *_ in links:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    return adj


def hop_distances(adj: dict[str, set[str]], root: str) -> dict[str, int]:
    """Plain BFS, no tie-breaking concerns: distances only."""
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def min_tree_edges(adj: dict[str, set[str]], root: str, leaves) -> set[tuple[str, str]]:
    """Edge set of the union of shortest paths, walking back from each leaf.

    Each node's parent is its lexicographically smallest neighbour one hop
    closer to the root; this is computed from distances alone.
    """
    dist = hop_distances(adj, root)
    edges = set()
    for leaf in leaves:
        node = leaf
        while node != root:
            parent = min(v for v in adj[node] if dist.get(v) == dist[node] - 1)
            edges.add(tuple(sorted((parent, node))))
            node = parent
    return edges


def random_connected_graph(rng, n_nodes: int, extra_edges: int) -> tuple[list[str], list[tuple[str, str, int]]]:
    """Random spanning tree plus ``extra_edges`` chords; node ids are shuffled."""
    nodes = [f"n{i:02d}" for i in range(n_nodes)]
    rng.shuffle(nodes)
    links = set()
    for i in range(1, n_nodes):
        a, b = nodes[i], nodes[rng.randrange(i)]
        links.add(tuple(sorted((a, b))))
    for _ in range(extra_edges):
        a, b = rng.sample(nodes, 2)
        links.add(tuple(sorted((a, b))))
    return sorted(nodes), [(a, b, 1) for a, b in sorted(links)]


def build_scenario(doc: dict, name: str = "test"):
    """Round-trip a scenario dict through the YAML loader so validation applies."""
    import yaml

    from coapicn.scenario import parse_scenario

    return parse_scenario(yaml.safe_dump(doc, sort_keys=False), name=name)


def shared_link_doc(clients=None, resources=None, mode="icn", seed=7) -> dict:
    return {
        "topology": {
            "nodes": ["nap1", "nap2", "f1", "f2", "nap3"],
            "links": [["nap1", "f1", 1], ["nap2", "f1", 1], ["f1", "f2", 1], ["f2", "nap3", 1]],
        },
        "run": {"seed": seed, "mode": mode},
        "rd": {"node": "nap3"},
        "naps": ["nap1", "nap2", "nap3"],
        "servers": [{
            "name": "server", "nap": "nap3", "host": "sensor",
            "resources": resources or {"/temp": {"available_at": 60, "value": "21.5"}},
        }],
        "clients": clients if clients is not None else [
            {"name": "clientA", "nap": "nap1", "actions": [{"at": 20, "op": "get", "host": "sensor", "path": "/temp", "token": "T1"}]},
            {"name": "clientB", "nap": "nap2", "actions": [{"at": 24, "op": "get", "host": "sensor", "path": "/temp", "token": "T2"}]},
        ],
    }


def client(name, nap, *actions) -> dict:
    return {"name": name, "nap": nap, "actions": list(actions)}


def get(at, token, path="/temp", host="sensor") -> dict:
    return {"at": at, "op": "get", "host": host, "path": path, "token": token}


def observe(at, token, path="/power", host="sensor") -> dict:
    return {"at": at, "op": "observe", "host": host, "path": path, "token": token}


def cancel(at, token) -> dict:
    return {"at": at, "op": "cancel", "token": token}


def random_scenario_doc(rng, mode: str = "icn") -> dict:
    """A random scenario within the property-suite bounds.

    At most 10 NAPs, 50 clients and 20 distinct request fingerprints.  Delayed
    resources make identical requests overlap so suppression is exercised,
    and clients reuse the same few tokens so the NAPs have to rewrite them.
    Some servers join a multicast group or an anycast group.
    """
    nodes, links = random_connected_graph(rng, rng.randint(3, 16), rng.randint(0, 8))
    naps = sorted(rng.sample(nodes, rng.randint(2, min(10, len(nodes)))))
    servers, targets = [], []
    for i in range(rng.randint(1, 4)):
        host = f"h{i}"
        resources = {}
        for j in range(rng.randint(1, 3)):
            path = f"/r{j}"
            kind = rng.choice(["available_at", "immediate", "observable"])
            if kind == "available_at":
                resources[path] = {"available_at": rng.randint(30, 160), "value": f"v{i}{j}"}
            elif kind == "immediate":
                resources[path] = {"immediate": f"v{i}{j}"}
            else:
                times = sorted(rng.sample(range(30, 260), rng.randint(1, 4)))
                resources[path] = {"observable": {"initial": "0", "changes": [[t, str(k + 1)] for k, t in enumerate(times)]}}
                targets.append(("observe", host, path))
            targets.append(("get", host, path))
        groups = [g for g in ("all", "any") if rng.random() < 0.4]
        servers.append({"name": f"srv{i}", "nap": rng.choice(naps), "host": host, "groups": groups, "resources": resources})
    for group in ("all", "any"):
        if any(group in s["groups"] for s in servers):
            targets.append(("group_get", group, "/r0"))
    targets = rng.sample(targets, min(20, len(targets)))
    clients = []
    for c in range(rng.randint(1, 50)):
        t = rng.randint(20, 60)
        actions, cancels = [], []
        for k in range(rng.randint(1, 3)):
            op, host, path = rng.choice(targets)
            token = f"t{k}" if rng.random() < 0.7 else f"c{c}k{k}"
            target = {"group": host} if op == "group_get" else {"host": host}
            actions.append({"at": t, "op": op, **target, "path": path, "token": token})
            if op == "observe" and rng.random() < 0.5:
                cancels.append({"at": t + rng.randint(0, 150), "op": "cancel", "token": token})
            t += rng.randint(0, 30)
        actions = sorted(actions + cancels, key=lambda a: a["at"])
        clients.append({"name": f"cl{c:02d}", "nap": rng.choice(naps), "actions": actions})
    return {
        "topology": {"nodes": nodes, "links": [list(l) for l in links]},
        "run": {"seed": rng.randrange(1 << 30), "mode": mode},
        "rd": {"node": rng.choice(naps), "anycast_groups": ["any"]},
        "naps": naps,
        "servers": servers,
        "clients": clients,
    }
