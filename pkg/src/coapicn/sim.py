"""Assemble a scenario into a running simulation and collect its report."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .endpoints import CoapClient, CoapServer, IpSide, RdServer
from .icn.fabric import Fabric
from .icn.rendezvous import Rendezvous
from .icn.scheduler import EventLog, Scheduler
from .icn.topology import TopologyGraph
from .metrics import REQUEST_KIND, RESPONSE_KIND, MetricsReport
from .nap.handler import Mode, Nap
from .rd import ResourceDirectory
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

__all__ = ["RuntimeInvariantViolation", "Simulation", "SimResult", "run", "FORBIDDEN_EVENT_PREFIXES"]

RD_SERVER_NAME = "rd-server"
FORBIDDEN_EVENT_PREFIXES = ("dns", "ipmc")
MAX_EVENTS = 5_000_000


class RuntimeInvariantViolation(RuntimeError):
    def __init__(self, invariant: str, detail: str) -> None:
        self.invariant = invariant
        super().__init__(f"invariant violated: {invariant}: {detail}")


@dataclass
class SimResult:
    report: MetricsReport
    log_text: str
    sim: "Simulation"


class Simulation:
    def __init__(self, config: ScenarioConfig) -> None:
        self.config = config
        cfg = config
        self.digest = cfg.digest()
        self.sched = Scheduler()
        self.log = EventLog({"scenario": cfg.name, "digest": self.digest, "seed": str(cfg.seed), "mode": cfg.mode.value})
        self.graph: TopologyGraph = cfg.graph()
        self.rendezvous = Rendezvous(self.graph, cfg.anycast_policy)
        self.fabric = Fabric(self.sched, self.graph, self.rendezvous, self.log, cfg.rv_latency)
        self.ip = IpSide(self.sched, self.log, cfg.ip_latency)
        self.naps = {
            n: Nap(n, self.fabric, self.ip, mode=cfg.mode, rd_host=cfg.rd_host, anycast_groups=cfg.anycast_groups)
            for n in cfg.naps
        }
        self.directory = ResourceDirectory(known_nodes=cfg.naps, clock=lambda: self.sched.now)
        self.rd_server = None
        if cfg.rd_node is not None:
            self.rd_server = RdServer(self.directory, cfg.rd_node, self.ip, RD_SERVER_NAME, cfg.seed)
            self.naps[cfg.rd_node].host_resource_directory(self.directory, RD_SERVER_NAME)
        self.servers: dict[str, CoapServer] = {}
        for s in cfg.servers:
            self.servers[s.script.name] = CoapServer(s.script, s.nap, self.ip, cfg.seed, cfg.rd_host)
            self.naps[s.nap].attach_server(s.script.host_uri, s.script.name)
        self.clients = {c.name: CoapClient(c, self.ip, cfg.seed) for c in cfg.clients}

    def run(self, check: bool = True) -> SimResult:
        for nap in self.naps.values():
            nap.start(feed=self.rd_server is not None)
        for server in self.servers.values():
            server.start()
        for client in self.clients.values():
            client.start()
        self.sched.run(until=self.config.until, max_events=MAX_EVENTS)
        report = self.report()
        if check:
            self.check_invariants(report)
        return SimResult(report, self.log.text(), self)

    # -- invariants ------------------------------------------------------------

    def check_invariants(self, report: MetricsReport) -> None:
        for kind in sorted(self.log.kinds()):
            if kind.startswith(FORBIDDEN_EVENT_PREFIXES):
                raise RuntimeInvariantViolation("no-dns-no-ipmc", f"event kind {kind!r} occurred")
        for name, client in sorted(self.clients.items()):
            if client.failures:
                raise RuntimeInvariantViolation("token-correlation", f"{name}: {client.failures[0]}")
        for name, server in sorted(self.servers.items()):
            if server.echo_violations:
                raise RuntimeInvariantViolation("token-echo", f"{name} answered a token it never received")
            if self.config.mode is Mode.ICN:
                for key, n in sorted(server.max_outstanding.items()):
                    if n > 1:
                        raise RuntimeInvariantViolation("suppression", f"{name} held {n} concurrent requests for {key}")
        try:
            self.rendezvous.table.check()
        except AssertionError as exc:
            raise RuntimeInvariantViolation("rendezvous-table", str(exc)) from None
        if self.sched.pending() == 0 and report.deliveries != report.expected_deliveries:
            raise RuntimeInvariantViolation(
                "delivery-conservation", f"{report.deliveries} deliveries for {report.expected_deliveries} expected"
            )

    # -- reporting -------------------------------------------------------------

    def report(self) -> MetricsReport:
        stats = self.fabric.stats
        kinds: dict[str, int] = {}
        notifications = 0
        for pub in stats.publications:
            kinds[pub.kind] = kinds.get(pub.kind, 0) + pub.edges
            if pub.kind == RESPONSE_KIND and pub.tag.startswith("obs=") and int(pub.tag[4:]) >= 1:
                notifications += pub.edges
        max_out = {}
        for name, server in self.servers.items():
            max_out[name] = max(server.max_outstanding.values(), default=0)
        return MetricsReport(
            mode=self.config.mode.value,
            digest=self.digest,
            seed=self.config.seed,
            tick_ms=self.config.tick_ms,
            link_counts=self.graph.link_counts(),
            fabric_messages=sum(p.edges for p in stats.publications),
            control_messages=stats.control_messages,
            ip_datagrams=self.ip.datagrams,
            request_messages=kinds.get(REQUEST_KIND, 0),
            response_messages=kinds.get(RESPONSE_KIND, 0),
            notification_messages=notifications,
            kind_messages=kinds,
            deliveries=stats.deliveries,
            expected_deliveries=stats.expected_deliveries,
            nap_stats={n: nap.snapshot() for n, nap in sorted(self.naps.items())},
            server_requests={n: s.requests_received for n, s in sorted(self.servers.items())},
            server_max_outstanding=dict(sorted(max_out.items())),
            client_latencies={n: tuple(r.latency for r in c.responses) for n, c in sorted(self.clients.items())},
            client_failures=sum(len(c.failures) for c in self.clients.values()),
        )


def run(config: ScenarioConfig, check: bool = True) -> SimResult:
    """Run ``config`` to completion; raise RuntimeInvariantViolation if ``check`` finds a broken invariant."""
    return Simulation(config).run(check)
