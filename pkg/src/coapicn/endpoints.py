"""Scripted CoAP clients and servers attached to NAPs over an IP hop."""

from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Protocol

from .coap import (
    CoapMessage,
    Code,
    MalformedPacket,
    MsgType,
    Option,
    ResourceLink,
    code_str,
    decode,
    encode,
    encode_uint,
    serialize_link_format,
    sort_options,
)
from .icn.scheduler import EventLog, Scheduler
from .rd import LINK_FORMAT, RD_HOST, REGISTER_PATH, ResourceDirectory

log = logging.getLogger(__name__)

__all__ = [
    "ScriptError",
    "IpSide",
    "Behavior",
    "ServerScript",
    "ClientAction",
    "ClientScript",
    "ResponseRecord",
    "CoapServer",
    "CoapClient",
    "RdServer",
]


class ScriptError(ValueError):
    pass


class Receiver(Protocol):
    def receive(self, src: str, data: bytes) -> None: ...


class IpSide:
    """Datagram hop between endpoints and their NAP; every datagram is a real encoding."""

    def __init__(self, scheduler: Scheduler, event_log: EventLog, latency: float = 1) -> None:
        self.sched = scheduler
        self.log = event_log
        self.latency = latency
        self.handlers: dict[str, Receiver] = {}
        self.datagrams = 0

    def register(self, addr: str, handler: Receiver) -> None:
        if addr in self.handlers:
            raise ScriptError(f"address {addr!r} registered twice")
        self.handlers[addr] = handler

    def send(self, src: str, dst: str, msg: CoapMessage) -> None:
        self.send_raw(src, dst, encode(msg), str(msg))

    def send_raw(self, src: str, dst: str, data: bytes, detail: str = "") -> None:
        self.datagrams += 1
        self.log.add(self.sched.now, src, "ip.tx", "", f"to={dst} {detail or data.hex()}")
        self.sched.after(self.latency, self._arrive, src, dst, data)

    def _arrive(self, src: str, dst: str, data: bytes) -> None:
        handler = self.handlers.get(dst)
        if handler is None:
            self.log.add(self.sched.now, dst, "ip.unreachable", "", f"from={src}")
            return
        handler.receive(src, data)


class _Endpoint:
    def __init__(self, name: str, nap: str, ip: IpSide, seed: int) -> None:
        self.name = name
        self.nap = nap
        self.ip = ip
        self.rng = random.Random(f"{seed}:{name}")
        self._mid = self.rng.randrange(0x10000)

    def next_mid(self) -> int:
        self._mid = (self._mid + 1) & 0xFFFF
        return self._mid

    @property
    def now(self) -> float:
        return self.ip.sched.now

    def _log(self, kind: str, detail: str) -> None:
        self.ip.log.add(self.now, self.name, kind, "", detail)

    def _decode(self, data: bytes) -> CoapMessage | None:
        try:
            return decode(data)
        except MalformedPacket as exc:
            self._log("ip.malformed", str(exc))
            return None


# -- servers -------------------------------------------------------------------


@dataclass(frozen=True)
class Behavior:
    """How a resource answers: immediately, once available, or as an observable."""

    kind: str  # "immediate" | "available_at" | "observable"
    value: str = ""
    at: float = 0
    changes: tuple[tuple[float, str], ...] = ()
    rt: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("immediate", "available_at", "observable"):
            raise ScriptError(f"unknown behavior {self.kind!r}")
        times = [t for t, _ in self.changes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScriptError("observable change schedule must be strictly increasing")

    @classmethod
    def immediate(cls, value: str, rt: str | None = None) -> "Behavior":
        return cls("immediate", value, rt=rt)

    @classmethod
    def available_at(cls, at: float, value: str, rt: str | None = None) -> "Behavior":
        return cls("available_at", value, at=at, rt=rt)

    @classmethod
    def observable(cls, initial: str, changes=(), rt: str | None = None) -> "Behavior":
        return cls("observable", initial, changes=tuple((t, v) for t, v in changes), rt=rt)


@dataclass(frozen=True)
class ServerScript:
    name: str
    host_uri: str
    resources: dict[str, Behavior]
    groups: frozenset[str] = frozenset()
    register_at: float = 0
    silent_groups: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.host_uri:
            raise ScriptError(f"server {self.name}: empty host")
        for path in self.resources:
            if not path.startswith("/") or path == "/" or "//" in path:
                raise ScriptError(f"server {self.name}: invalid path {path!r}")

    def links(self) -> list[ResourceLink]:
        out = []
        for path, b in self.resources.items():
            attrs = {}
            if b.rt:
                attrs["rt"] = b.rt
            if b.kind == "observable":
                attrs["obs"] = ""
            out.append(ResourceLink(tuple(path.strip("/").split("/")), attrs))
        return out


def split_path(path: str) -> tuple[str, ...]:
    return tuple(path.strip("/").split("/")) if path.strip("/") else ()


class CoapServer(_Endpoint):
    """Origin server driven by a ServerScript."""

    def __init__(self, script: ServerScript, nap: str, ip: IpSide, seed: int = 0, rd_host: str = RD_HOST) -> None:
        super().__init__(script.name, nap, ip, seed)
        self.script = script
        self.rd_host = rd_host
        self.resources = {split_path(p): b for p, b in script.resources.items()}
        self.values = {p: b.value for p, b in self.resources.items()}
        self.seq: dict[tuple[str, ...], int] = {p: 0 for p in self.resources}
        # path -> (requester, token) -> fingerprint key the observation is held under
        self.observers: dict[tuple[str, ...], dict[tuple[str, bytes], tuple]] = defaultdict(dict)
        self.received_tokens: set[tuple[str, bytes]] = set()
        self.requests_received = 0
        self.requests_by_fp: Counter = Counter()
        self.outstanding: Counter = Counter()
        self.max_outstanding: Counter = Counter()
        self.emissions: list[tuple[float, str, str, str, int | None]] = []
        self.echo_violations = 0
        self.registration_replies: list[CoapMessage] = []
        ip.register(self.name, self)

    def start(self) -> None:
        sched = self.ip.sched
        sched.at(self.script.register_at, self.register)
        for path, b in self.resources.items():
            for t, value in b.changes:
                sched.at(t, self._change, path, value)

    def register(self) -> None:
        opts = [
            (Option.URI_HOST, self.rd_host.encode()),
            (Option.URI_PATH, REGISTER_PATH[0].encode()),
            (Option.CONTENT_FORMAT, encode_uint(LINK_FORMAT)),
            (Option.URI_QUERY, f"ep={self.name}".encode()),
            (Option.URI_QUERY, f"h={self.script.host_uri}".encode()),
        ]
        opts += [(Option.URI_QUERY, f"gp={g}".encode()) for g in sorted(self.script.groups)]
        token = self.rng.randbytes(4)
        msg = CoapMessage(MsgType.CON, Code.POST.value, self.next_mid(), token, sort_options(opts),
                          serialize_link_format(self.script.links()))
        self._log("srv.register", f"rd={self.rd_host} tok={token.hex()}")
        self.ip.send(self.name, self.nap, msg)

    # -- inbound -------------------------------------------------------------

    def receive(self, src: str, data: bytes) -> None:
        msg = self._decode(data)
        if msg is None:
            return
        if msg.is_response:
            self.registration_replies.append(msg)
            return
        if not msg.is_request:
            return
        self.received_tokens.add((src, msg.token))
        path = msg.uri_path
        obs = msg.observe
        group = msg.uri_host if msg.uri_host and msg.uri_host != self.script.host_uri else None
        if obs == 1:
            self._deregister(src, msg, path)
            return
        key = (code_str(msg.code), msg.uri_host or "", "/" + "/".join(path), obs == 0)
        self.requests_received += 1
        self.requests_by_fp[key] += 1
        self._log("srv.rx", f"from={src} {key[0]} {key[2]}{' obs' if key[3] else ''} tok={msg.token.hex()}")
        if group is not None and group in self.script.silent_groups:
            if msg.msg_type == MsgType.CON:
                self.ip.send(self.name, src, CoapMessage(MsgType.ACK, Code.EMPTY.value, msg.message_id))
            return
        behavior = self.resources.get(path)
        if behavior is None or msg.code != Code.GET.value:
            self._reply(src, msg, Code.NOT_FOUND, b"")
            return
        if behavior.kind == "available_at" and self.now < behavior.at:
            if msg.msg_type == MsgType.CON:
                self.ip.send(self.name, src, CoapMessage(MsgType.ACK, Code.EMPTY.value, msg.message_id))
            self._hold(key)
            self.ip.sched.at(behavior.at, self._deferred, src, msg.token, path, key)
            return
        if behavior.kind == "observable" and obs == 0:
            observers = self.observers[path]
            if (src, msg.token) not in observers:
                observers[(src, msg.token)] = key
                self._hold(key)
            self._reply(src, msg, Code.CONTENT, self.values[path].encode(), observe=self.seq[path])
            return
        self._reply(src, msg, Code.CONTENT, self.values[path].encode())

    def _hold(self, key) -> None:
        self.outstanding[key] += 1
        self.max_outstanding[key] = max(self.max_outstanding[key], self.outstanding[key])

    def _release(self, key) -> None:
        self.outstanding[key] -= 1

    def _deregister(self, src: str, msg: CoapMessage, path: tuple[str, ...]) -> None:
        self._log("srv.deregister", f"from={src} tok={msg.token.hex()}")
        key = self.observers.get(path, {}).pop((src, msg.token), None)
        if key is not None:
            self._release(key)
        value = self.values.get(path)
        if value is None:
            self._reply(src, msg, Code.NOT_FOUND, b"")
        else:
            self._reply(src, msg, Code.CONTENT, value.encode())

    def _deferred(self, dst: str, token: bytes, path: tuple[str, ...], key) -> None:
        self._release(key)
        self._emit(dst, CoapMessage(MsgType.NON, Code.CONTENT.value, self.next_mid(), token, (),
                                    self.values[path].encode()))

    def _change(self, path: tuple[str, ...], value: str) -> None:
        self.values[path] = value
        self.seq[path] += 1
        self._log("srv.change", f"/{'/'.join(path)} seq={self.seq[path]} value={value}")
        for dst, token in list(self.observers.get(path, {})):
            opts = ((Option.OBSERVE, encode_uint(self.seq[path])),)
            self._emit(dst, CoapMessage(MsgType.NON, Code.CONTENT.value, self.next_mid(), token, opts, value.encode()))

    def _reply(self, dst: str, req: CoapMessage, code: Code, payload: bytes, observe: int | None = None) -> None:
        opts = () if observe is None else ((Option.OBSERVE, encode_uint(observe)),)
        if req.msg_type == MsgType.CON:
            msg = CoapMessage(MsgType.ACK, code.value, req.message_id, req.token, opts, payload)
        else:
            msg = CoapMessage(MsgType.NON, code.value, self.next_mid(), req.token, opts, payload)
        self._emit(dst, msg)

    def _emit(self, dst: str, msg: CoapMessage) -> None:
        if (dst, msg.token) not in self.received_tokens:
            self.echo_violations += 1
            log.error("%s emitting token %s never received from %s", self.name, msg.token.hex(), dst)
        self.emissions.append((self.now, dst, msg.token.hex(), code_str(msg.code), msg.observe))
        self.ip.send(self.name, dst, msg)


class RdServer(_Endpoint):
    """Resource Directory reachable as a plain CoAP server."""

    def __init__(self, directory: ResourceDirectory, nap: str, ip: IpSide, name: str = "rd-server", seed: int = 0) -> None:
        super().__init__(name, nap, ip, seed)
        self.directory = directory
        self.requests_received = 0
        ip.register(self.name, self)

    def receive(self, src: str, data: bytes) -> None:
        msg = self._decode(data)
        if msg is None or not msg.is_request:
            return
        self.requests_received += 1
        reply = self.directory.handle_request(msg)
        if msg.msg_type == MsgType.CON:
            reply = reply.replace(msg_type=MsgType.ACK, message_id=msg.message_id)
        else:
            reply = reply.replace(message_id=self.next_mid())
        self._log("rd.reply", f"to={src} {code_str(reply.code)} tok={msg.token.hex()}")
        self.ip.send(self.name, src, reply)


# -- clients -------------------------------------------------------------------


@dataclass(frozen=True)
class ClientAction:
    at: float
    op: str  # "get" | "observe" | "group_get" | "cancel"
    token: bytes
    host: str | None = None
    path: str = ""
    group: str | None = None

    def __post_init__(self) -> None:
        if self.op not in ("get", "observe", "group_get", "cancel"):
            raise ScriptError(f"unknown client action {self.op!r}")
        if len(self.token) > 8:
            raise ScriptError("token longer than 8 bytes")
        if self.op in ("get", "observe") and not self.host:
            raise ScriptError(f"{self.op} needs a host")
        if self.op == "group_get" and not self.group:
            raise ScriptError("group_get needs a group")


@dataclass(frozen=True)
class ClientScript:
    name: str
    attach_nap: str
    actions: tuple[ClientAction, ...] = ()

    def __post_init__(self) -> None:
        times = [a.at for a in self.actions]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ScriptError(f"client {self.name}: action times must be non-decreasing")
        issued = [a.token for a in self.actions if a.op != "cancel"]
        if len(issued) != len(set(issued)):
            raise ScriptError(f"client {self.name}: tokens must be unique")
        for a in self.actions:
            if a.op == "cancel" and a.token not in issued:
                raise ScriptError(f"client {self.name}: cancel of unknown token {a.token!r}")


@dataclass(frozen=True)
class ResponseRecord:
    token: bytes
    code: str
    payload: bytes
    time: float
    observe: int | None
    latency: float


@dataclass
class _Outstanding:
    action: ClientAction
    request: CoapMessage
    sent_at: float
    responses: int = 0
    last_observe: int | None = None


class CoapClient(_Endpoint):
    """Executes a ClientScript and records every response for later assertions."""

    def __init__(self, script: ClientScript, ip: IpSide, seed: int = 0) -> None:
        super().__init__(script.name, script.attach_nap, ip, seed)
        self.script = script
        self.outstanding: dict[bytes, _Outstanding] = {}
        self.cancelled: dict[bytes, float] = {}
        self.responses: list[ResponseRecord] = []
        self.failures: list[str] = []
        self.late_after_cancel = 0
        self.acks = 0
        ip.register(self.name, self)

    def start(self) -> None:
        for action in self.script.actions:
            self.ip.sched.at(action.at, self._perform, action)

    def _request(self, action: ClientAction, observe: int | None) -> CoapMessage:
        host = action.group if action.op == "group_get" else action.host
        opts = [(Option.URI_HOST, host.encode())]
        opts += [(Option.URI_PATH, seg.encode()) for seg in split_path(action.path)]
        if observe is not None:
            opts.append((Option.OBSERVE, encode_uint(observe)))
        return CoapMessage(MsgType.CON, Code.GET.value, self.next_mid(), action.token, sort_options(opts))

    def _perform(self, action: ClientAction) -> None:
        if action.op == "cancel":
            entry = self.outstanding.pop(action.token, None)
            if entry is None:
                self.failures.append(f"cancel of inactive token {action.token.hex()}")
                return
            self.cancelled[action.token] = self.now
            msg = self._request(entry.action, observe=1)
            self._log("cli.cancel", f"tok={action.token.hex()}")
            self.ip.send(self.name, self.nap, msg)
            return
        msg = self._request(action, observe=0 if action.op == "observe" else None)
        self.outstanding[action.token] = _Outstanding(action, msg, self.now)
        self._log("cli.request", f"{action.op} {action.group or action.host}{action.path} tok={action.token.hex()}")
        self.ip.send(self.name, self.nap, msg)

    def receive(self, src: str, data: bytes) -> None:
        msg = self._decode(data)
        if msg is None:
            return
        if msg.is_empty:
            self.acks += 1
            return
        if not msg.is_response:
            return
        entry = self.outstanding.get(msg.token)
        if entry is None:
            if msg.token in self.cancelled:
                self.late_after_cancel += 1
                self._log("cli.late", f"tok={msg.token.hex()} after cancel")
                return
            self.failures.append(f"t={self.now}: response token {msg.token.hex()} matches no outstanding request")
            self._log("cli.assert", f"unmatched tok={msg.token.hex()}")
            return
        obs = msg.observe
        if obs is not None and entry.last_observe is not None and obs <= entry.last_observe:
            self.failures.append(f"t={self.now}: observe {obs} not after {entry.last_observe} for {msg.token.hex()}")
        record = ResponseRecord(msg.token, code_str(msg.code), msg.payload, self.now, obs, self.now - entry.sent_at)
        self.responses.append(record)
        self._log("cli.response", f"tok={msg.token.hex()} {record.code} obs={obs} payload={msg.payload!r}")
        entry.responses += 1
        if obs is not None:
            entry.last_observe = obs
        op = entry.action.op
        if op == "get" or (op == "observe" and (obs is None or not msg.code[0] == 2)):
            del self.outstanding[msg.token]

    def tokens_received(self) -> list[bytes]:
        return [r.token for r in self.responses]
