"""CoAP Resource Directory: registration, lookup and a watch feed for NAPs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from .coap import (
    CoapMessage,
    Code,
    LinkFormatError,
    MsgType,
    Option,
    ResourceLink,
    encode_uint,
    parse_link_format,
    serialize_link_format,
)

log = logging.getLogger(__name__)

__all__ = [
    "RD_HOST",
    "REGISTER_PATH",
    "LOOKUP_PATH",
    "LINK_FORMAT",
    "DuplicateEndpoint",
    "InvalidFilter",
    "UnknownWatcher",
    "RdEntry",
    "WatchEvent",
    "ResourceDirectory",
    "encode_watch_event",
    "decode_watch_event",
]

RD_HOST = "rd"
REGISTER_PATH = ("rd",)
LOOKUP_PATH = ("rd-lookup",)
LINK_FORMAT = 40


class DuplicateEndpoint(ValueError):
    pass


class InvalidFilter(ValueError):
    pass


class UnknownWatcher(KeyError):
    pass


@dataclass(frozen=True)
class RdEntry:
    endpoint_name: str
    host_uri: str
    links: tuple[ResourceLink, ...]
    groups: frozenset[str] = frozenset()
    registered_at: float = 0

    def __post_init__(self) -> None:
        if not self.host_uri:
            raise ValueError("host_uri must be non-empty")
        if not self.links:
            raise ValueError("an entry needs at least one link")

    def has_path(self, path: Iterable[str]) -> bool:
        path = tuple(path)
        return any(link.uri_path == path for link in self.links)


@dataclass(frozen=True)
class WatchEvent:
    endpoint_name: str
    host_uri: str
    links: tuple[ResourceLink, ...]
    groups: frozenset[str] = field(default_factory=frozenset)


def encode_watch_event(event: WatchEvent) -> bytes:
    links = []
    for link in event.links:
        attrs = dict(link.attributes)
        attrs["ep"] = event.endpoint_name
        attrs["anchor"] = f"coap://{event.host_uri}"
        if event.groups:
            attrs["gp"] = " ".join(sorted(event.groups))
        links.append(ResourceLink(link.uri_path, attrs))
    return serialize_link_format(links)


def decode_watch_event(payload: bytes) -> WatchEvent:
    links = parse_link_format(payload)
    if not links:
        raise LinkFormatError("watch event without links")
    first = links[0].attributes
    anchor = first.get("anchor", "")
    if not anchor.startswith("coap://"):
        raise LinkFormatError(f"bad anchor {anchor!r}")
    plain = []
    for link in links:
        attrs = {k: v for k, v in link.attributes.items() if k not in ("ep", "anchor", "gp")}
        plain.append(ResourceLink(link.uri_path, attrs))
    groups = frozenset(first.get("gp", "").split())
    return WatchEvent(first.get("ep", ""), anchor[len("coap://") :], tuple(plain), groups)


class ResourceDirectory:
    """Endpoint registry. ``clock`` supplies registration timestamps."""

    def __init__(self, known_nodes: Iterable[str] | None = None, clock: Callable[[], float] = lambda: 0) -> None:
        self.entries: dict[str, RdEntry] = {}
        self.known_nodes = None if known_nodes is None else set(known_nodes)
        self.clock = clock
        self._watchers: dict[str, Callable[[WatchEvent], None]] = {}

    def register(
        self,
        endpoint_name: str,
        host_uri: str,
        payload: bytes | str,
        groups: Iterable[str] = (),
    ) -> str:
        links = tuple(parse_link_format(payload))
        if not links:
            raise LinkFormatError("registration carries no links")
        for other in self.entries.values():
            if other.host_uri == host_uri and other.endpoint_name != endpoint_name:
                raise DuplicateEndpoint(f"host {host_uri!r} already registered by {other.endpoint_name!r}")
        entry = RdEntry(endpoint_name, host_uri, links, frozenset(groups), self.clock())
        self.entries[endpoint_name] = entry
        event = WatchEvent(endpoint_name, host_uri, links, entry.groups)
        for watcher in list(self._watchers.values()):
            watcher(event)
        return f"rd/{endpoint_name}"

    def lookup(
        self,
        host_uri: str | None = None,
        group: str | None = None,
        resource_type: str | None = None,
    ) -> list[RdEntry]:
        if host_uri is not None and group is not None:
            raise InvalidFilter("host_uri and group filters are mutually exclusive")
        out = []
        for entry in self.entries.values():
            if host_uri is not None and entry.host_uri != host_uri:
                continue
            if group is not None and group not in entry.groups:
                continue
            if resource_type is not None:
                links = tuple(link for link in entry.links if resource_type in (link.get("rt") or "").split())
                if not links:
                    continue
                entry = replace(entry, links=links)
            out.append(entry)
        return out

    def groups(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for entry in self.entries.values():
            for g in sorted(entry.groups):
                out.setdefault(g, []).append(entry.host_uri)
        return out

    def watch(self, nap: str, callback: Callable[[WatchEvent], None]) -> None:
        """Replay every current entry to ``callback``, then push each new registration."""
        if self.known_nodes is not None and nap not in self.known_nodes:
            raise UnknownWatcher(nap)
        self._watchers[nap] = callback
        for entry in list(self.entries.values()):
            callback(WatchEvent(entry.endpoint_name, entry.host_uri, entry.links, entry.groups))

    def unwatch(self, nap: str) -> None:
        self._watchers.pop(nap, None)

    # -- CoAP surface ------------------------------------------------------------

    def handle_request(self, msg: CoapMessage) -> CoapMessage:
        """Serve POST /rd and GET /rd-lookup; return the response (token echoed)."""
        query = {}
        groups = []
        for item in msg.uri_query:
            k, _, v = item.partition("=")
            if k == "gp":
                groups.append(v)
            else:
                query[k] = v
        if msg.code == Code.POST.value and msg.uri_path == REGISTER_PATH:
            ep = query.get("ep")
            if not ep:
                return self._reply(msg, Code.SERVICE_UNAVAILABLE, b"missing ep")
            try:
                reg = self.register(ep, query.get("h", ep), msg.payload, groups)
            except (LinkFormatError, DuplicateEndpoint) as exc:
                log.warning("registration of %s refused: %s", ep, exc)
                return self._reply(msg, Code.SERVICE_UNAVAILABLE, str(exc).encode())
            return self._reply(msg, Code.CREATED, reg.encode())
        if msg.code == Code.GET.value and msg.uri_path == LOOKUP_PATH:
            try:
                entries = self.lookup(query.get("h"), groups[0] if groups else None, query.get("rt"))
            except InvalidFilter as exc:
                return self._reply(msg, Code.SERVICE_UNAVAILABLE, str(exc).encode())
            links = []
            for entry in entries:
                for link in entry.links:
                    attrs = dict(link.attributes, anchor=f"coap://{entry.host_uri}", ep=entry.endpoint_name)
                    links.append(ResourceLink(link.uri_path, attrs))
            reply = self._reply(msg, Code.CONTENT, serialize_link_format(links))
            return reply.with_option(Option.CONTENT_FORMAT, encode_uint(LINK_FORMAT))
        return self._reply(msg, Code.NOT_FOUND, b"")

    @staticmethod
    def _reply(req: CoapMessage, code: Code, payload: bytes) -> CoapMessage:
        return CoapMessage(MsgType.NON, code.value, 0, req.token, (), payload)
