"""Scenario files: YAML with topology / run / rd / naps / servers / clients sections.

Validation errors carry the line number of the offending node so hand-written
scenarios are easy to fix.  See ``scenarios/reference.yaml`` for a commented
example of every field.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .endpoints import Behavior, ClientAction, ClientScript, ScriptError, ServerScript
from .icn.anycast import AnycastPolicy, PolicyKind
from .icn.topology import TopologyGraph, TopologyError
from .nap.handler import Mode
from .rd import RD_HOST

__all__ = ["ParseError", "ValidationError", "ServerConfig", "ScenarioConfig", "load_scenario", "parse_scenario", "parse_token"]

SECTIONS = ("topology", "run", "rd", "naps", "servers", "clients")


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class ServerConfig:
    script: ServerScript
    nap: str


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: tuple[str, ...]
    links: tuple[tuple[str, str, float], ...]
    naps: tuple[str, ...]
    servers: tuple[ServerConfig, ...]
    clients: tuple[ClientScript, ...]
    seed: int
    mode: Mode = Mode.ICN
    rd_node: str | None = None
    rd_host: str = RD_HOST
    anycast_groups: frozenset[str] = frozenset()
    anycast_policy: AnycastPolicy = field(default_factory=AnycastPolicy)
    tick_ms: float = 1.0
    rv_latency: float = 1
    ip_latency: float = 1
    until: float | None = None
    name: str = "scenario"

    def graph(self) -> TopologyGraph:
        g = TopologyGraph()
        for n in self.nodes:
            g.add_node(n)
        for a, b, lat in self.links:
            g.add_link(a, b, lat)
        return g

    def with_mode(self, mode: Mode) -> "ScenarioConfig":
        return _replace(self, mode=mode)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return _replace(self, seed=seed)

    def digest(self) -> str:
        """Hash of everything except the mode, so both modes of one scenario compare."""
        doc = {
            "nodes": list(self.nodes),
            "links": [list(l) for l in self.links],
            "naps": list(self.naps),
            "rd": [self.rd_node, self.rd_host, sorted(self.anycast_groups)],
            "policy": [self.anycast_policy.kind.value, self.anycast_policy.tie_break],
            "run": [self.seed, self.tick_ms, self.rv_latency, self.ip_latency, self.until],
            "servers": [_server_doc(s) for s in self.servers],
            "clients": [
                [c.name, c.attach_nap, [[a.at, a.op, a.token.hex(), a.host, a.path, a.group] for a in c.actions]]
                for c in self.clients
            ],
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _replace(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


def _server_doc(s: ServerConfig) -> list:
    sc = s.script
    res = {p: [b.kind, b.value, b.at, [list(c) for c in b.changes], b.rt] for p, b in sorted(sc.resources.items())}
    return [sc.name, sc.host_uri, s.nap, sorted(sc.groups), sorted(sc.silent_groups), sc.register_at, res]


def parse_token(raw: Any, line: int | None = None) -> bytes:
    if not isinstance(raw, str) or not raw:
        raise ValidationError(f"token must be a non-empty string, got {raw!r}", line)
    if raw.startswith("hex:"):
        try:
            token = bytes.fromhex(raw[4:])
        except ValueError:
            raise ValidationError(f"bad hex token {raw!r}", line) from None
    else:
        token = raw.encode()
    if len(token) > 8:
        raise ValidationError(f"token {raw!r} longer than 8 bytes", line)
    return token


class _Doc:
    """Parsed YAML plus the source line of every node, keyed by path."""

    def __init__(self, text: str) -> None:
        try:
            loader = yaml.SafeLoader(text)
            try:
                node = loader.get_single_node()
                self.data = loader.construct_document(node) if node is not None else None
            finally:
                loader.dispose()
        except yaml.YAMLError as exc:
            raise ParseError(str(exc)) from None
        self.lines: dict[tuple, int] = {}
        if node is not None:
            self._walk(node, ())

    def _walk(self, node: yaml.Node, path: tuple) -> None:
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self.lines[path + (k.value,)] = k.start_mark.line + 1
                self._walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def line(self, *path) -> int | None:
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return parse_scenario(text, name=path.stem)


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    doc = _Doc(text)
    data = doc.data
    if not isinstance(data, dict):
        raise ParseError("scenario must be a mapping with named sections")

    def fail(msg: str, *p) -> ValidationError:
        return ValidationError(msg, doc.line(*p))

    def section(key: str, kind: type, required: bool = True):
        if key not in data:
            if required:
                raise fail(f"missing section {key!r}")
            return kind()
        value = data[key]
        if value is None:
            return kind()
        if not isinstance(value, kind):
            raise fail(f"section {key!r} must be a {kind.__name__}", key)
        return value

    for key in data:
        if key not in SECTIONS:
            raise fail(f"unknown section {key!r}", key)

    topo = section("topology", dict)
    nodes = topo.get("nodes")
    if not isinstance(nodes, list) or not nodes or not all(isinstance(n, str) for n in nodes):
        raise fail("topology.nodes must be a non-empty list of names", "topology", "nodes")
    if len(set(nodes)) != len(nodes):
        raise fail("duplicate node in topology.nodes", "topology", "nodes")
    known = set(nodes)

    def need_node(n: Any, *p) -> str:
        if n not in known:
            raise fail(f"unknown node {n!r}", *p)
        return n

    links = []
    for i, link in enumerate(topo.get("links") or []):
        if not isinstance(link, list) or len(link) not in (2, 3):
            raise fail("link must be [a, b] or [a, b, latency]", "topology", "links", i)
        a = need_node(link[0], "topology", "links", i)
        b = need_node(link[1], "topology", "links", i)
        lat = link[2] if len(link) == 3 else 1
        if not isinstance(lat, (int, float)) or isinstance(lat, bool) or lat <= 0:
            raise fail(f"link latency must be positive, got {lat!r}", "topology", "links", i)
        links.append((a, b, lat))

    run = section("run", dict)
    if "seed" not in run:
        raise fail("run.seed is mandatory", "run")
    seed = run["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise fail("run.seed must be an integer", "run", "seed")
    try:
        mode = Mode(run.get("mode", "icn"))
    except ValueError:
        raise fail(f"run.mode must be icn or baseline, got {run.get('mode')!r}", "run", "mode") from None
    try:
        policy = AnycastPolicy(PolicyKind(run.get("anycast_policy", PolicyKind.MIN_HOP.value)))
    except ValueError:
        raise fail(f"unknown anycast policy {run.get('anycast_policy')!r}", "run", "anycast_policy") from None
    numbers = {}
    for key, default in (("tick_ms", 1.0), ("rendezvous_latency", 1), ("ip_latency", 1), ("until", None)):
        v = run.get(key, default)
        if v is not None and (not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0):
            raise fail(f"run.{key} must be a positive number", "run", key)
        numbers[key] = v
    for key in run:
        if key not in ("seed", "mode", "anycast_policy", "tick_ms", "rendezvous_latency", "ip_latency", "until"):
            raise fail(f"unknown run setting {key!r}", "run", key)

    naps = section("naps", list)
    for i, n in enumerate(naps):
        need_node(n, "naps", i)
    if len(set(naps)) != len(naps):
        raise fail("duplicate NAP", "naps")
    nap_set = set(naps)

    def need_nap(n: Any, *p) -> str:
        if n not in nap_set:
            raise fail(f"{n!r} is not a NAP node", *p)
        return n

    rd = section("rd", dict, required=False)
    rd_node = rd.get("node")
    if rd_node is not None:
        need_nap(rd_node, "rd", "node")
    rd_host = rd.get("host", RD_HOST)
    anycast_groups = frozenset(rd.get("anycast_groups") or ())

    names: set[str] = {"rd-server"}
    hosts: set[str] = set()

    def claim(name: Any, *p) -> str:
        if not isinstance(name, str) or not name:
            raise fail("endpoint name must be a non-empty string", *p)
        if name in names or name in known:
            raise fail(f"duplicate endpoint name {name!r}", *p)
        names.add(name)
        return name

    servers = []
    for i, s in enumerate(section("servers", list, required=False)):
        p = ("servers", i)
        if not isinstance(s, dict):
            raise fail("server entry must be a mapping", *p)
        sname = claim(s.get("name"), *p, "name")
        nap = need_nap(s.get("nap"), *p, "nap")
        host = s.get("host", sname)
        if host in hosts or host == rd_host:
            raise fail(f"host {host!r} served twice", *p, "host")
        hosts.add(host)
        resources = {}
        for rpath, spec in (s.get("resources") or {}).items():
            resources[rpath] = _behavior(spec, fail, *p, "resources", rpath)
        if rd_node is None:
            raise fail("servers need an rd section to register with", *p)
        try:
            script = ServerScript(
                sname,
                host,
                resources,
                frozenset(s.get("groups") or ()),
                s.get("register_at", 0),
                frozenset(s.get("silent_groups") or ()),
            )
        except ScriptError as exc:
            raise fail(str(exc), *p) from None
        servers.append(ServerConfig(script, nap))

    clients = []
    for i, c in enumerate(section("clients", list, required=False)):
        p = ("clients", i)
        if not isinstance(c, dict):
            raise fail("client entry must be a mapping", *p)
        cname = claim(c.get("name"), *p, "name")
        nap = need_nap(c.get("nap"), *p, "nap")
        actions = []
        for j, a in enumerate(c.get("actions") or []):
            q = p + ("actions", j)
            if not isinstance(a, dict):
                raise fail("action must be a mapping", *q)
            try:
                actions.append(ClientAction(
                    at=a.get("at", 0),
                    op=a.get("op", "get"),
                    token=parse_token(a.get("token"), doc.line(*q, "token")),
                    host=a.get("host"),
                    path=a.get("path", ""),
                    group=a.get("group"),
                ))
            except ScriptError as exc:
                raise fail(str(exc), *q) from None
        try:
            clients.append(ClientScript(cname, nap, tuple(actions)))
        except ScriptError as exc:
            raise fail(str(exc), *p) from None

    cfg = ScenarioConfig(
        nodes=tuple(nodes),
        links=tuple(links),
        naps=tuple(naps),
        servers=tuple(servers),
        clients=tuple(clients),
        seed=seed,
        mode=mode,
        rd_node=rd_node,
        rd_host=rd_host,
        anycast_groups=anycast_groups,
        anycast_policy=policy,
        tick_ms=numbers["tick_ms"],
        rv_latency=numbers["rendezvous_latency"],
        ip_latency=numbers["ip_latency"],
        until=numbers["until"],
        name=name,
    )
    try:
        cfg.graph().check_connected()
    except TopologyError as exc:
        raise fail(str(exc), "topology") from None
    return cfg


def _behavior(spec: Any, fail, *p) -> Behavior:
    if not isinstance(spec, dict):
        raise fail("resource must be a mapping", *p)
    rt = spec.get("rt")
    try:
        if "immediate" in spec:
            return Behavior.immediate(str(spec["immediate"]), rt)
        if "available_at" in spec:
            return Behavior.available_at(spec["available_at"], str(spec.get("value", "")), rt)
        if "observable" in spec:
            obs = spec["observable"] or {}
            changes = [(t, str(v)) for t, v in obs.get("changes") or []]
            return Behavior.observable(str(obs.get("initial", "")), changes, rt)
    except (ScriptError, TypeError, ValueError) as exc:
        raise fail(str(exc), *p) from None
    raise fail("resource needs one of immediate / available_at / observable", *p)
