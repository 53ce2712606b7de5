"""Request fingerprints and the named objects derived from them."""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..coap import CoapMessage, code_str
from ..icn.names import NamedObjectId, digest32, scope

__all__ = [
    "RequestFingerprint",
    "PendingNotice",
    "MalformedNotice",
    "derive_ids",
    "request_scope",
    "response_id",
    "notice_id",
    "feed_id",
]

COAP_LABEL = "coap"
CONTROL_LABEL = "coap-ctl"
FEED_LABEL = "coap-rd"
RESPONSE_LABEL = "rsp"


@dataclass(frozen=True)
class RequestFingerprint:
    """Identity of a request minus token and message id.

    ``discriminator`` is empty in normal operation; the unicast baseline sets
    it to make every request distinct.
    """

    method: tuple[int, int]
    host_uri: str
    uri_path: tuple[str, ...] = ()
    uri_query: tuple[str, ...] = ()
    observe: bool = False
    discriminator: bytes = b""

    @classmethod
    def from_message(cls, msg: CoapMessage, host_uri: str | None = None, discriminator: bytes = b"") -> "RequestFingerprint":
        host = host_uri if host_uri is not None else (msg.uri_host or "")
        return cls(
            method=msg.code,
            host_uri=host,
            uri_path=msg.uri_path,
            uri_query=msg.uri_query,
            observe=msg.observe == 0,
            discriminator=discriminator,
        )

    def canonical(self) -> bytes:
        """Length-prefixed serialization; unambiguous for any field contents."""

        def field(b: bytes) -> bytes:
            return struct.pack("!I", len(b)) + b

        parts = [
            bytes([self.method[0], self.method[1]]),
            field(self.host_uri.encode()),
            struct.pack("!H", len(self.uri_path)),
            *(field(s.encode()) for s in self.uri_path),
            struct.pack("!H", len(self.uri_query)),
            *(field(s.encode()) for s in self.uri_query),
            b"\x01" if self.observe else b"\x00",
        ]
        if self.discriminator:
            parts.append(field(self.discriminator))
        return b"".join(parts)

    def __str__(self) -> str:
        path = "/" + "/".join(self.uri_path)
        q = ("?" + "&".join(self.uri_query)) if self.uri_query else ""
        obs = " obs" if self.observe else ""
        return f"{code_str(self.method)} coap://{self.host_uri}{path}{q}{obs}"


def request_scope(host_or_group: str) -> tuple[bytes, ...]:
    return scope(COAP_LABEL, host_or_group)


def response_id(request: NamedObjectId, responder: str | None = None) -> NamedObjectId:
    """Response object for ``request``; group responses are tagged with the responder host."""
    rid = request.rid + RESPONSE_LABEL.encode()
    if responder is not None:
        rid += b"|" + responder.encode()
    # responses live in a sub-scope so scope subscriptions only catch requests
    return NamedObjectId(request.scope_path + scope(RESPONSE_LABEL), digest32(rid))


def derive_ids(fp: RequestFingerprint) -> tuple[NamedObjectId, NamedObjectId]:
    req = NamedObjectId(request_scope(fp.host_uri), digest32(fp.canonical()))
    return req, response_id(req)


def notice_id(request: NamedObjectId, host_uri: str, requester: str) -> NamedObjectId:
    return NamedObjectId(scope(CONTROL_LABEL, host_uri), digest32(request.rid + b"ctl|" + requester.encode()))


def feed_id(rd_host: str) -> NamedObjectId:
    return NamedObjectId(scope(FEED_LABEL, rd_host), digest32(b"watch"))


class MalformedNotice(ValueError):
    pass


@dataclass(frozen=True)
class PendingNotice:
    """Tells a client-side NAP which token the shared response will carry."""

    fingerprint: bytes  # request rid
    network_token: bytes
    issuer: str
    responder: str

    def __post_init__(self) -> None:
        if len(self.network_token) > 8:
            raise ValueError("network token longer than 8 bytes")
        if len(self.fingerprint) != 32:
            raise ValueError("fingerprint digest must be 32 bytes")

    def encode(self) -> bytes:
        issuer = self.issuer.encode()
        responder = self.responder.encode()
        return (
            self.fingerprint
            + bytes([len(self.network_token)])
            + self.network_token
            + struct.pack("!H", len(issuer))
            + issuer
            + responder
        )

    @classmethod
    def decode(cls, data: bytes) -> "PendingNotice":
        try:
            fp = data[:32]
            tkl = data[32]
            pos = 33 + tkl
            token = data[33:pos]
            (ilen,) = struct.unpack_from("!H", data, pos)
            pos += 2
            issuer = data[pos : pos + ilen]
            if len(fp) != 32 or len(token) != tkl or len(issuer) != ilen:
                raise MalformedNotice("truncated notice")
            return cls(fp, token, issuer.decode(), data[pos + ilen :].decode())
        except (IndexError, struct.error, UnicodeDecodeError, ValueError) as exc:
            raise MalformedNotice(str(exc)) from None

