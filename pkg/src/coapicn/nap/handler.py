"""Network attachment point with a CoAP handler.

Client side: identical requests from local clients share one pending entry
and one fabric request; the response is fanned out locally with each
client's own token.  Server side: identical requests arriving from several
NAPs reach the origin server once; later requesters get a PendingNotice
naming the token the shared response will carry, and the response is
published once over a multicast tree.

In ``Mode.UNICAST_BASELINE`` every request is made distinct, so the same
code degenerates into a plain forward proxy with unicast delivery.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field

from ..coap import (
    CoapMessage,
    Code,
    InvalidMessage,
    MalformedPacket,
    MsgType,
    Option,
    check_supported,
    code_str,
    decode,
    encode,
    encode_uint,
)
from ..icn.fabric import Fabric
from ..icn.names import NamedObjectId
from ..icn.rendezvous import Notification
from ..icn.topology import ForwardingTree
from ..rd import LINK_FORMAT, RD_HOST, ResourceDirectory, WatchEvent, decode_watch_event, encode_watch_event
from ..endpoints import IpSide
from .naming import (
    MalformedNotice,
    PendingNotice,
    RequestFingerprint,
    derive_ids,
    feed_id,
    notice_id,
    request_scope,
    response_id,
)

log = logging.getLogger(__name__)

__all__ = ["Mode", "EntryMode", "PendingEntry", "ServerEntry", "Nap"]


class Mode(enum.Enum):
    ICN = "icn"
    UNICAST_BASELINE = "baseline"


class EntryMode(enum.Enum):
    ONE_SHOT = "one-shot"
    OBSERVE = "observe"


@dataclass
class PendingEntry:
    """Client-side state for one fingerprint."""

    fingerprint: RequestFingerprint
    request_id: NamedObjectId
    network_token: bytes
    mode: EntryMode
    local_waiters: dict[tuple[str, bytes], None] = field(default_factory=dict)
    forwarded_to_server: bool = False
    responders: dict[NamedObjectId, str] = field(default_factory=dict)
    responder_tokens: dict[str, bytes] = field(default_factory=dict)
    awaiting: set[str] = field(default_factory=set)
    group: str | None = None
    anycast: bool = False
    last_response: CoapMessage | None = None
    loopback_hosts: tuple[str, ...] = ()

    def expected_token(self, responder: str) -> bytes:
        return self.responder_tokens.get(responder, self.network_token)


@dataclass
class ServerEntry:
    """Server-side state for one (fingerprint, responding host) pair."""

    request_id: NamedObjectId
    response_id: NamedObjectId
    host: str
    network_token: bytes
    mode: EntryMode
    server: str | None = None
    server_token: bytes = b""
    server_request: CoapMessage | None = None
    requesters: set[str] = field(default_factory=set)
    local_requester: bool = False
    last_response: tuple[bytes, str] | None = None
    live: bool = True


@dataclass
class _Advertisement:
    epoch: int
    active: bool = True
    seen: bool = False
    tree: ForwardingTree | None = None


class Nap:
    def __init__(
        self,
        node: str,
        fabric: Fabric,
        ip: IpSide,
        *,
        mode: Mode = Mode.ICN,
        rd_host: str = RD_HOST,
        anycast_groups: frozenset[str] = frozenset(),
    ) -> None:
        self.node = node
        self.fabric = fabric
        self.ip = ip
        self.mode = mode
        self.rd_host = rd_host
        self.anycast_groups = frozenset(anycast_groups)
        self.local_servers: dict[str, str] = {}  # host -> endpoint address
        self.server_addrs: set[str] = set()
        # client side
        self.client_entries: dict[bytes, PendingEntry] = {}
        self.rsp_index: dict[NamedObjectId, tuple[PendingEntry, str]] = {}
        self.outbox: dict[NamedObjectId, tuple[bytes, str]] = {}
        self.unsubscribed: set[NamedObjectId] = set()
        # fingerprint -> network tokens used by entries we already retired
        self.retired: dict[bytes, set[bytes]] = {}
        # server side
        self.server_entries: dict[tuple[bytes, str], ServerEntry] = {}
        self.server_tokens: dict[tuple[str, bytes], ServerEntry] = {}
        # (server, token) -> message id of the deregistration still awaiting its reply
        self.cancelled_server_tokens: dict[tuple[str, bytes], int] = {}
        self.rsp_live: dict[NamedObjectId, ServerEntry] = {}
        self.rsp_queue: dict[NamedObjectId, list[tuple[bytes, frozenset[str], str]]] = {}
        self.served_scopes: dict[tuple[bytes, ...], tuple[str, str]] = {}
        # rendezvous bookkeeping
        self.adv: dict[NamedObjectId, _Advertisement] = {}
        # directory view learned from the RD feed
        self.directory: dict[str, WatchEvent] = {}
        self.group_members: dict[str, set[str]] = {}
        self.feed_oid = feed_id(rd_host)
        self.rd: ResourceDirectory | None = None
        self.feed_log: list[bytes] = []
        self.feed_sent: dict[str, int] = {}
        self.counters: Counter = Counter()
        self.max_pending_entries = 0
        self.max_pending_waiters = 0
        self.max_server_entries = 0
        self._mid = 0
        self._minted = 0
        self._baseline_seq = 0
        ip.register(node, self)
        fabric.attach(node, self)

    # -- wiring ----------------------------------------------------------------

    def attach_server(self, host: str, addr: str) -> None:
        self.local_servers[host] = addr
        self.server_addrs.add(addr)

    def host_resource_directory(self, directory: ResourceDirectory, addr: str) -> None:
        """Front the RD server; its watch feed is pushed to every NAP over the fabric."""
        self.rd = directory
        self.attach_server(self.rd_host, addr)
        self._serve_scope(request_scope(self.rd_host), ("host", self.rd_host))

    def start(self, feed: bool = True) -> None:
        """Join the RD watch feed; ``feed=False`` when the scenario runs no directory."""
        if self.rd is not None:
            self._advertise(self.feed_oid)
            self.rd.watch(self.node, self._on_watch_event)
        elif feed:
            self.fabric.subscribe(self.node, self.feed_oid)

    # -- helpers ---------------------------------------------------------------

    @property
    def now(self) -> float:
        return self.fabric.sched.now

    def _log(self, kind: str, oid="", detail: str = "") -> None:
        self.fabric.log.add(self.now, self.node, kind, oid, detail)

    def _next_mid(self) -> int:
        self._mid = (self._mid + 1) & 0xFFFF
        return self._mid

    def _kind(self, host: str, base: str) -> str:
        return f"rd-{base}" if host == self.rd_host else base

    def _track_sizes(self) -> None:
        self.max_pending_entries = max(self.max_pending_entries, len(self.client_entries))
        waiters = sum(len(e.local_waiters) for e in self.client_entries.values())
        self.max_pending_waiters = max(self.max_pending_waiters, waiters)
        self.max_server_entries = max(self.max_server_entries, len(self.server_entries))

    def _advertise(self, oid: NamedObjectId, anycast: bool = False) -> None:
        st = self.adv.get(oid)
        if st is not None and st.active:
            return
        self.adv[oid] = _Advertisement((st.epoch if st else 0) + 1)
        self.fabric.advertise(self.node, oid, anycast)

    def _unadvertise(self, oid: NamedObjectId) -> None:
        st = self.adv.get(oid)
        if st is None or not st.active:
            return
        st.active = False
        st.tree = None
        self.fabric.unadvertise(self.node, oid)

    def _subscribe(self, oid: NamedObjectId) -> None:
        self.unsubscribed.discard(oid)
        self.fabric.subscribe(self.node, oid)

    def _unsubscribe(self, oid: NamedObjectId) -> None:
        self.unsubscribed.add(oid)
        self.fabric.unsubscribe(self.node, oid)

    def _serve_scope(self, scope: tuple[bytes, ...], target: tuple[str, str]) -> None:
        if scope in self.served_scopes:
            return
        self.served_scopes[scope] = target
        self.fabric.subscribe_scope(self.node, scope)

    def _to_endpoint(self, addr: str, msg: CoapMessage) -> None:
        self.ip.send(self.node, addr, msg)

    def _reply(self, client: str, req: CoapMessage, code: Code, acked: bool) -> None:
        if req.msg_type == MsgType.CON and not acked:
            msg = CoapMessage(MsgType.ACK, code.value, req.message_id, req.token)
        else:
            msg = CoapMessage(MsgType.NON, code.value, self._next_mid(), req.token)
        self._to_endpoint(client, msg)

    # -- IP side -----------------------------------------------------------------

    def receive(self, src: str, data: bytes) -> None:
        try:
            msg = decode(data, strict=False)
        except MalformedPacket as exc:
            self.counters["malformed"] += 1
            self._log("nap.malformed", "", f"from={src} {exc}")
            return
        if msg.is_request:
            self.handle_client_request(src, msg)
        elif msg.is_response and src in self.server_addrs:
            self.handle_server_response(src, msg)
        else:
            self._log("ip.rx", "", f"from={src} {msg.msg_type.name} {code_str(msg.code)}")

    def handle_client_request(self, client: str, msg: CoapMessage) -> None:
        try:
            check_supported(msg)
        except InvalidMessage as exc:
            self.counters["unsupported"] += 1
            self._log("nap.unsupported", "", f"from={client} {exc}")
            self._reply(client, msg, Code.SERVICE_UNAVAILABLE, acked=False)
            return
        if msg.msg_type == MsgType.CON:
            self._to_endpoint(client, CoapMessage(MsgType.ACK, Code.EMPTY.value, msg.message_id))
        host = msg.uri_host
        if not host:
            self._reply(client, msg, Code.NOT_FOUND, acked=True)
            return
        if msg.observe == 1:
            self._cancel_observe(client, msg)
            return
        if host in self.group_members and host not in self.directory:
            self.handle_group_request(client, msg, host)
            return
        disc = self._discriminator(client, msg)
        fp = RequestFingerprint.from_message(msg, host, disc)
        req_oid, rsp_oid = derive_ids(fp)
        entry = self.client_entries.get(req_oid.rid)
        if entry is not None:
            self._join(entry, client, msg)
            return
        entry = PendingEntry(fp, req_oid, msg.token, EntryMode.OBSERVE if fp.observe else EntryMode.ONE_SHOT)
        entry.local_waiters[(client, msg.token)] = None
        self.client_entries[req_oid.rid] = entry
        self._log("nap.request", req_oid, f"{fp} from={client} tok={msg.token.hex()}")
        self._send_request(entry, msg, host, [(rsp_oid, host)], remote=host not in self.local_servers)
        self._track_sizes()

    def _discriminator(self, client: str, msg: CoapMessage) -> bytes:
        if self.mode is Mode.ICN:
            return b""
        self._baseline_seq += 1
        return f"{self.node}|{client}|{msg.token.hex()}|{self._baseline_seq}".encode()

    def _join(self, entry: PendingEntry, client: str, msg: CoapMessage) -> None:
        entry.local_waiters[(client, msg.token)] = None
        self.counters["suppressed_local"] += 1
        self._log("nap.suppress", entry.request_id, f"from={client} tok={msg.token.hex()} waiters={len(entry.local_waiters)}")
        if entry.mode is EntryMode.OBSERVE and entry.last_response is not None:
            self._deliver_local(client, msg.token, entry.last_response)
        self._track_sizes()

    def _send_request(
        self,
        entry: PendingEntry,
        msg: CoapMessage,
        route: str,
        responders: list[tuple[NamedObjectId, str]],
        remote: bool,
        anycast: bool = False,
    ) -> None:
        req_oid = entry.request_id
        for rsp_oid, responder in responders:
            entry.responders[rsp_oid] = responder
            self.rsp_index[rsp_oid] = (entry, responder)
            if responder not in self.local_servers:
                self._subscribe(rsp_oid)
        data = encode(msg.replace(message_id=0, token=entry.network_token))
        entry.forwarded_to_server = True
        entry.loopback_hosts = tuple(r for _, r in responders if r in self.local_servers)
        if remote:
            self.outbox[req_oid] = (data, self._kind(route, "request"))
            self._advertise(req_oid, anycast)
        if req_oid.scope_path in self.served_scopes and (entry.loopback_hosts or not remote):
            self.handle_request_object(req_oid, data, self.node)

    def handle_group_request(self, client: str, msg: CoapMessage, group: str) -> None:
        path = msg.uri_path
        members = sorted(h for h in self.group_members.get(group, ()) if self.directory[h].links and _has_path(self.directory[h], path))
        anycast = group in self.anycast_groups
        if not members:
            self.counters["unknown_group"] += 1
            self._reply(client, msg, Code.NOT_FOUND, acked=msg.msg_type == MsgType.CON)
            return
        if self.mode is Mode.UNICAST_BASELINE:
            for host in members[:1] if anycast else members:
                sub = msg.with_option(Option.URI_HOST, host.encode())
                fp = RequestFingerprint.from_message(sub, host, self._discriminator(client, msg))
                req_oid, rsp_oid = derive_ids(fp)
                entry = PendingEntry(fp, req_oid, msg.token, EntryMode.OBSERVE if fp.observe else EntryMode.ONE_SHOT)
                entry.local_waiters[(client, msg.token)] = None
                self.client_entries[req_oid.rid] = entry
                self._send_request(entry, sub, host, [(rsp_oid, host)], remote=host not in self.local_servers)
            self._track_sizes()
            return
        fp = RequestFingerprint.from_message(msg, group)
        req_oid, _ = derive_ids(fp)
        entry = self.client_entries.get(req_oid.rid)
        if entry is not None:
            self._join(entry, client, msg)
            return
        entry = PendingEntry(fp, req_oid, msg.token, EntryMode.OBSERVE if fp.observe else EntryMode.ONE_SHOT,
                             group=group, anycast=anycast)
        entry.local_waiters[(client, msg.token)] = None
        entry.awaiting = set(members)
        self.client_entries[req_oid.rid] = entry
        self._log("nap.group", req_oid, f"{fp} members={','.join(members)} anycast={anycast}")
        local = [h for h in members if h in self.local_servers]
        responders = [(response_id(req_oid, h), h) for h in members]
        remote = any(h not in self.local_servers for h in members)
        if anycast and local:
            remote = False
        self._send_request(entry, msg, group, responders, remote=remote, anycast=anycast)
        self._track_sizes()

    def _cancel_observe(self, client: str, msg: CoapMessage) -> None:
        for entry in list(self.client_entries.values()):
            if (client, msg.token) in entry.local_waiters and entry.mode is EntryMode.OBSERVE:
                del entry.local_waiters[(client, msg.token)]
                self._log("nap.cancel", entry.request_id, f"from={client} tok={msg.token.hex()} left={len(entry.local_waiters)}")
                if not entry.local_waiters:
                    self._retire_client_entry(entry)
                return
        self._log("nap.cancel", "", f"from={client} tok={msg.token.hex()} no observation")

    def _retire_client_entry(self, entry: PendingEntry) -> None:
        if self.client_entries.get(entry.request_id.rid) is not entry:
            return
        del self.client_entries[entry.request_id.rid]
        old_tokens = self.retired.setdefault(entry.request_id.rid, set())
        old_tokens.update({entry.network_token, *entry.responder_tokens.values()})
        for rsp_oid, responder in entry.responders.items():
            if self.rsp_index.get(rsp_oid, (None,))[0] is entry:
                del self.rsp_index[rsp_oid]
            if responder not in self.local_servers:
                self._unsubscribe(rsp_oid)
        if entry.request_id in self.outbox:
            del self.outbox[entry.request_id]
            self._unadvertise(entry.request_id)
        for host in entry.loopback_hosts:
            sentry = self.server_entries.get((entry.request_id.rid, host))
            if sentry is not None and sentry.local_requester:
                sentry.local_requester = False
                self._check_observation(sentry)
        self._log("nap.retire", entry.request_id, f"{entry.fingerprint}")

    def _deliver_local(self, client: str, token: bytes, msg: CoapMessage) -> None:
        out = CoapMessage(MsgType.NON, msg.code, self._next_mid(), token, msg.options, msg.payload)
        self._to_endpoint(client, out)

    # -- fabric side -------------------------------------------------------------

    def on_notify(self, note: Notification) -> None:
        st = self.adv.get(note.oid)
        if st is None or not st.active or note.epoch != st.epoch:
            self._log("nap.stale_notify", note.oid, f"epoch={note.epoch}")
            return
        st.seen = True
        st.tree = note.tree
        if note.oid in self.outbox:
            self._flush_request(note.oid)
        elif note.oid == self.feed_oid:
            self._flush_feed()
        elif note.oid in self.rsp_live or note.oid in self.rsp_queue:
            self._on_response_tree(note.oid)

    def on_object(self, oid: NamedObjectId, payload: bytes, origin: str, kind: str) -> None:
        if kind.endswith("request"):
            self.handle_request_object(oid, payload, origin)
        elif kind.endswith("response"):
            self.handle_response_object(oid, payload, origin)
        elif kind == "notice":
            try:
                notice = PendingNotice.decode(payload)
            except MalformedNotice as exc:
                self._log("nap.malformed", oid, str(exc))
                return
            self.handle_pending_notice(notice)
        elif kind == "feed":
            self._on_feed_object(payload)
        else:
            self._log("nap.unknown_kind", oid, kind)

    def _flush_request(self, oid: NamedObjectId) -> None:
        tree = self.adv[oid].tree
        if tree is None or not tree.leaves:
            return
        data, kind = self.outbox.pop(oid)
        self.counters["requests_published"] += 1
        self.fabric.publish_data(self.node, tree, data, oid, kind)
        self._unadvertise(oid)

    # -- server side -------------------------------------------------------------

    def handle_request_object(self, oid: NamedObjectId, data: bytes, origin: str) -> None:
        target = self.served_scopes.get(oid.scope_path)
        if target is None:
            self._log("nap.unserved", oid, f"from={origin}")
            return
        try:
            msg = decode(data)
        except MalformedPacket as exc:
            self.counters["malformed"] += 1
            self._log("nap.malformed", oid, str(exc))
            return
        label, name = target
        if label == "host":
            self._server_side(oid, msg, origin, name, group=None)
            return
        path = msg.uri_path
        hosts = sorted(h for h, addr in self.local_servers.items()
                       if h in self.group_members.get(name, ()) and _has_path(self.directory[h], path))
        if name in self.anycast_groups:
            hosts = hosts[:1]
        if not hosts:
            self._log("nap.group_empty", oid, f"group={name} from={origin}")
            return
        for host in hosts:
            self._server_side(oid, msg, origin, host, group=name)

    def _server_side(self, req_oid: NamedObjectId, msg: CoapMessage, origin: str, host: str, group: str | None) -> None:
        rsp_oid = response_id(req_oid, host if group else None)
        entry = self.server_entries.get((req_oid.rid, host))
        if entry is not None and entry.live:
            self.counters["suppressed_at_server"] += 1
            self._log("nap.suppress_server", req_oid, f"host={host} from={origin} tok={entry.network_token.hex()}")
            notice = PendingNotice(req_oid.rid, entry.network_token, self.node, host)
            if origin == self.node:
                # our own client entry joins a remote requester's exchange
                entry.local_requester = True
                self.handle_pending_notice(notice)
            else:
                entry.requesters.add(origin)
                self._advertise(rsp_oid)
                self.counters["notices_sent"] += 1
                self.fabric.send(self.node, origin, notice.encode(), notice_id(req_oid, host, origin), "notice")
            if entry.mode is EntryMode.OBSERVE and entry.last_response is not None:
                data, tag = entry.last_response
                self._publish_response(entry, data, tag, targets={origin})
            return
        mode = EntryMode.OBSERVE if msg.observe == 0 else EntryMode.ONE_SHOT
        entry = ServerEntry(req_oid, rsp_oid, host, msg.token, mode)
        self.server_entries[(req_oid.rid, host)] = entry
        self.rsp_live[rsp_oid] = entry
        if origin == self.node:
            entry.local_requester = True
        else:
            entry.requesters.add(origin)
            self._advertise(rsp_oid)
        self._track_sizes()
        addr = self.local_servers.get(host)
        if addr is None:
            self.counters["no_local_server"] += 1
            self._log("nap.no_server", req_oid, f"host={host}")
            reply = CoapMessage(MsgType.NON, Code.NOT_FOUND.value, 0, entry.network_token)
            self._publish_response(entry, encode(reply), "")
            self._retire_server_entry(entry)
            return
        token = msg.token
        if (addr, token) in self.server_tokens or (addr, token) in self.cancelled_server_tokens:
            token = self._mint_token(addr)
        entry.server, entry.server_token = addr, token
        self.server_tokens[(addr, token)] = entry
        mtype = MsgType.NON if group else MsgType.CON
        fwd = CoapMessage(mtype, msg.code, self._next_mid(), token, msg.options, msg.payload)
        entry.server_request = fwd
        self.counters["forwarded_to_server"] += 1
        self._log("nap.forward", req_oid, f"to={addr} tok={token.hex()} requester={origin}")
        self._to_endpoint(addr, fwd)

    def _mint_token(self, addr: str) -> bytes:
        while True:
            self._minted += 1
            token = b"\xfe" + self._minted.to_bytes(4, "big")
            if (addr, token) not in self.server_tokens:
                return token

    def handle_server_response(self, server: str, msg: CoapMessage) -> None:
        if msg.msg_type == MsgType.CON:
            self._to_endpoint(server, CoapMessage(MsgType.ACK, Code.EMPTY.value, msg.message_id))
        entry = self.server_tokens.get((server, msg.token))
        if entry is None:
            dereg_mid = self.cancelled_server_tokens.get((server, msg.token))
            if dereg_mid is not None:
                if msg.msg_type == MsgType.ACK and msg.message_id == dereg_mid:
                    del self.cancelled_server_tokens[(server, msg.token)]
                    self._log("nap.deregistered", "", f"from={server} tok={msg.token.hex()}")
                else:
                    # a notification that crossed our deregistration
                    self.counters["late_responses"] += 1
                    self._log("nap.late", "", f"from={server} tok={msg.token.hex()} after deregistration")
                return
            self.counters["orphan_responses"] += 1
            self._log("nap.orphan", "", f"from={server} tok={msg.token.hex()}")
            return
        try:
            check_supported(msg)
        except InvalidMessage:
            msg = CoapMessage(msg.msg_type, Code.SERVICE_UNAVAILABLE.value, msg.message_id, msg.token)
        fabric_copy = CoapMessage(MsgType.NON, msg.code, 0, entry.network_token, msg.options, msg.payload)
        data = encode(fabric_copy)
        tag = f"obs={msg.observe}" if msg.observe is not None else ""
        self._publish_response(entry, data, tag)
        if entry.mode is EntryMode.OBSERVE and msg.observe is not None and msg.code[0] == 2:
            entry.last_response = (data, tag)
        else:
            self._retire_server_entry(entry)

    def _publish_response(self, entry: ServerEntry, data: bytes, tag: str, targets: set[str] | None = None) -> None:
        if targets is None:
            local = entry.local_requester
            remote = frozenset(entry.requesters)
        else:
            local = self.node in targets
            remote = frozenset(targets - {self.node})
        if remote:
            self.rsp_queue.setdefault(entry.response_id, []).append((data, remote, tag))
            self._flush_responses(entry.response_id)
        if local:
            self.handle_response_object(entry.response_id, data, self.node)

    def _on_response_tree(self, oid: NamedObjectId) -> None:
        st = self.adv[oid]
        leaves = st.tree.leaves if st.tree is not None else frozenset()
        entry = self.rsp_live.get(oid)
        if entry is not None:
            gone = sorted(entry.requesters - leaves)
            for node in gone:
                entry.requesters.discard(node)
                self._log("nap.requester_left", oid, f"node={node}")
        self._flush_responses(oid)
        if entry is not None:
            self._check_observation(entry)

    def _flush_responses(self, oid: NamedObjectId) -> None:
        st = self.adv.get(oid)
        queue = self.rsp_queue.get(oid)
        if queue and st is not None and st.active and st.seen:
            leaves = st.tree.leaves if st.tree is not None else frozenset()
            while queue:
                data, targets, tag = queue.pop(0)
                live = targets & leaves
                for node in sorted(targets - leaves):
                    self._log("nap.drop_target", oid, f"node={node}")
                if live:
                    self.counters["responses_published"] += 1
                    self.fabric.publish_data(self.node, st.tree.prune(live), data, oid,
                                             self._kind(self._host_of(oid), "response"), tag)
        if not self.rsp_queue.get(oid):
            self.rsp_queue.pop(oid, None)
            if oid not in self.rsp_live:
                self._unadvertise(oid)

    def _host_of(self, rsp_oid: NamedObjectId) -> str:
        entry = self.rsp_live.get(rsp_oid)
        if entry is not None:
            return entry.host
        return self.rd_host if rsp_oid.scope_path[:2] == request_scope(self.rd_host) else ""

    def _check_observation(self, entry: ServerEntry) -> None:
        if not entry.live or entry.mode is not EntryMode.OBSERVE:
            return
        if entry.requesters or entry.local_requester:
            return
        if entry.server is not None and entry.server_request is not None:
            req = entry.server_request.with_option(Option.OBSERVE, encode_uint(1))
            req = req.replace(message_id=self._next_mid(), msg_type=MsgType.CON)
            self.cancelled_server_tokens[(entry.server, entry.server_token)] = req.message_id
            self._log("nap.deregister", entry.request_id, f"to={entry.server} tok={entry.server_token.hex()}")
            self._to_endpoint(entry.server, req)
        self._retire_server_entry(entry)

    def _retire_server_entry(self, entry: ServerEntry) -> None:
        if not entry.live:
            return
        entry.live = False
        key = (entry.request_id.rid, entry.host)
        if self.server_entries.get(key) is entry:
            del self.server_entries[key]
        if entry.server is not None and self.server_tokens.get((entry.server, entry.server_token)) is entry:
            del self.server_tokens[(entry.server, entry.server_token)]
        if self.rsp_live.get(entry.response_id) is entry:
            del self.rsp_live[entry.response_id]
        if not self.rsp_queue.get(entry.response_id):
            self._unadvertise(entry.response_id)
        self._log("nap.retire_server", entry.request_id, f"host={entry.host}")

    # -- client side, fabric inbound ---------------------------------------------------

    def handle_pending_notice(self, notice: PendingNotice) -> None:
        entry = self.client_entries.get(notice.fingerprint)
        if entry is None and notice.fingerprint in self.retired:
            # our requesters left before the notice arrived
            self.counters["late_notices"] += 1
            self.retired[notice.fingerprint].add(notice.network_token)
            self._log("nap.late_notice", "", f"from={notice.issuer} tok={notice.network_token.hex()}")
            return
        if entry is None:
            self.counters["stale_notices"] += 1
            self._log("nap.stale_notice", "", f"from={notice.issuer} tok={notice.network_token.hex()}")
            log.warning("%s: stale pending notice from %s", self.node, notice.issuer)
            return
        if entry.group is None:
            entry.network_token = notice.network_token
        else:
            entry.responder_tokens[notice.responder] = notice.network_token
        self._log("nap.notice", entry.request_id, f"from={notice.issuer} tok={notice.network_token.hex()}")

    def handle_response_object(self, oid: NamedObjectId, data: bytes, origin: str) -> None:
        item = self.rsp_index.get(oid)
        if item is None:
            key = "late_responses" if oid in self.unsubscribed else "orphan_responses"
            self.counters[key] += 1
            self._log("nap.late" if key == "late_responses" else "nap.orphan", oid, f"from={origin}")
            return
        entry, responder = item
        try:
            msg = decode(data)
        except MalformedPacket as exc:
            self.counters["malformed"] += 1
            self._log("nap.malformed", oid, str(exc))
            return
        expected = entry.expected_token(responder)
        if msg.token != expected and msg.token in self.retired.get(entry.request_id.rid, ()):
            # answer to an earlier, already retired entry for the same request
            self.counters["late_responses"] += 1
            self._log("nap.late", oid, f"tok={msg.token.hex()} from a retired entry")
            return
        if msg.token != expected:
            self.counters["token_mismatch"] += 1
            self._log("nap.token_mismatch", oid, f"got={msg.token.hex()} want={expected.hex()}")
            log.error("%s: token mismatch on %s", self.node, oid)
            return
        last = entry.last_response
        if entry.group is None and last is not None and msg.observe is not None and msg.observe <= last.observe:
            # replayed or reordered notification: clients only see fresher ones
            self.counters["stale_notifications"] += 1
            self._log("nap.not_fresh", oid, f"obs={msg.observe} last={last.observe}")
            return
        self._log("nap.response", oid, f"{code_str(msg.code)} from={origin} waiters={len(entry.local_waiters)}")
        for client, token in list(entry.local_waiters):
            self._deliver_local(client, token, msg)
        if entry.mode is EntryMode.OBSERVE and msg.observe is not None and msg.code[0] == 2:
            entry.last_response = msg
            return
        if entry.group is not None and not entry.anycast:
            entry.awaiting.discard(responder)
            if entry.awaiting:
                return
        self._retire_client_entry(entry)

    # -- resource directory feed ---------------------------------------------------------

    def _on_watch_event(self, event: WatchEvent) -> None:
        msg = CoapMessage(MsgType.NON, Code.CONTENT.value, 0, b"",
                          ((Option.CONTENT_FORMAT, encode_uint(LINK_FORMAT)),), encode_watch_event(event))
        self.feed_log.append(encode(msg))
        self._log("rd.watch", self.feed_oid, f"host={event.host_uri} groups={','.join(sorted(event.groups))}")
        self._apply_feed_event(event)
        self._flush_feed()

    def _flush_feed(self) -> None:
        st = self.adv.get(self.feed_oid)
        if st is None or st.tree is None:
            return
        tree = st.tree
        leaves = sorted(tree.leaves)
        for leaf in leaves:
            self.feed_sent.setdefault(leaf, 0)
        start = min((self.feed_sent[l] for l in leaves), default=len(self.feed_log))
        for i in range(start, len(self.feed_log)):
            targets = [l for l in leaves if self.feed_sent[l] <= i]
            self.fabric.publish_data(self.node, tree.prune(targets), self.feed_log[i], self.feed_oid, "feed")
        for leaf in leaves:
            self.feed_sent[leaf] = len(self.feed_log)

    def _on_feed_object(self, payload: bytes) -> None:
        try:
            msg = decode(payload)
            event = decode_watch_event(msg.payload)
        except (MalformedPacket, ValueError) as exc:
            self._log("nap.malformed", self.feed_oid, str(exc))
            return
        self._apply_feed_event(event)

    def _apply_feed_event(self, event: WatchEvent) -> None:
        host = event.host_uri
        previous = self.directory.get(host)
        if previous is not None:
            for g in previous.groups - event.groups:
                members = self.group_members.get(g)
                if members is not None:
                    members.discard(host)
                    if not members:
                        del self.group_members[g]
        self.directory[host] = event
        for g in sorted(event.groups):
            self.group_members.setdefault(g, set()).add(host)
        self._log("nap.learn", "", f"host={host} groups={','.join(sorted(event.groups))}")
        if host in self.local_servers:
            self._serve_scope(request_scope(host), ("host", host))
            for g in sorted(event.groups):
                self._serve_scope(request_scope(g), ("group", g))

    # -- reporting -------------------------------------------------------------

    def snapshot(self) -> dict[str, int]:
        out = dict(sorted(self.counters.items()))
        out["max_pending_entries"] = self.max_pending_entries
        out["max_pending_waiters"] = self.max_pending_waiters
        out["max_server_entries"] = self.max_server_entries
        out["live_pending_entries"] = len(self.client_entries)
        return out


def _has_path(event: WatchEvent, path: tuple[str, ...]) -> bool:
    return any(link.uri_path == tuple(path) for link in event.links)
