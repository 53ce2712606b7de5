"""CoAP message model and RFC 7252 wire codec.

Only the subset of codes and options used by the gateway is accepted by
:func:`encode` and by :func:`decode` in strict mode.  Non-strict decoding
returns structurally valid messages carrying out-of-subset codes/options so
a proxy can still answer them (e.g. with 5.03).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterable

__all__ = [
    "CoapError",
    "InvalidMessage",
    "MalformedPacket",
    "UnsupportedMessage",
    "MsgType",
    "Code",
    "Option",
    "CoapMessage",
    "encode",
    "decode",
    "check_supported",
    "encode_uint",
    "decode_uint",
    "sort_options",
]

VERSION = 1
PAYLOAD_MARKER = 0xFF


class CoapError(Exception):
    pass


class InvalidMessage(CoapError, ValueError):
    """Message violates a structural invariant or uses an unsupported code/option."""


class MalformedPacket(CoapError, ValueError):
    """Datagram cannot be parsed; it must be dropped (or RST'd)."""


class UnsupportedMessage(MalformedPacket):
    """Well-formed datagram outside the supported code/option subset."""


class MsgType(enum.IntEnum):
    CON = 0
    NON = 1
    ACK = 2
    RST = 3


class Code(tuple, enum.Enum):
    EMPTY = (0, 0)
    GET = (0, 1)
    POST = (0, 2)
    CREATED = (2, 1)
    CONTENT = (2, 5)
    NOT_FOUND = (4, 4)
    SERVICE_UNAVAILABLE = (5, 3)

    def __str__(self) -> str:
        return f"{self.value[0]}.{self.value[1]:02d}"


class Option(enum.IntEnum):
    URI_HOST = 3
    OBSERVE = 6
    URI_PATH = 11
    CONTENT_FORMAT = 12
    URI_QUERY = 15


SUPPORTED_CODES = frozenset(c.value for c in Code)

# (min length, max length) per RFC 7252 §5.10 / RFC 7641 §2
_OPTION_LENGTHS = {
    Option.URI_HOST: (1, 255),
    Option.OBSERVE: (0, 3),
    Option.URI_PATH: (0, 255),
    Option.CONTENT_FORMAT: (0, 2),
    Option.URI_QUERY: (0, 255),
}
_NON_REPEATABLE = frozenset({Option.URI_HOST, Option.OBSERVE, Option.CONTENT_FORMAT})


def code_str(code: tuple[int, int]) -> str:
    return f"{code[0]}.{code[1]:02d}"


def encode_uint(value: int) -> bytes:
    """Minimal big-endian encoding used by uint options (0 encodes as empty)."""
    if value < 0:
        raise ValueError("uint option value must be non-negative")
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def decode_uint(data: bytes) -> int:
    return int.from_bytes(data, "big")


def sort_options(options: Iterable[tuple[int, bytes]]) -> tuple[tuple[int, bytes], ...]:
    # sorted() is stable: repeated options keep their relative order
    return tuple(sorted(((int(n), bytes(v)) for n, v in options), key=lambda o: o[0]))


@dataclass(frozen=True)
class CoapMessage:
    msg_type: MsgType
    code: tuple[int, int]
    message_id: int
    token: bytes = b""
    options: tuple[tuple[int, bytes], ...] = ()
    payload: bytes = b""
    version: int = field(default=VERSION)

    def __post_init__(self) -> None:
        object.__setattr__(self, "msg_type", MsgType(self.msg_type))
        object.__setattr__(self, "code", (int(self.code[0]), int(self.code[1])))
        object.__setattr__(self, "options", tuple((int(n), bytes(v)) for n, v in self.options))
        object.__setattr__(self, "token", bytes(self.token))
        object.__setattr__(self, "payload", bytes(self.payload))
        self.validate()

    def validate(self) -> None:
        if self.version != VERSION:
            raise InvalidMessage(f"version must be 1, got {self.version}")
        cls, detail = self.code
        if not (0 <= cls <= 7 and 0 <= detail <= 31):
            raise InvalidMessage(f"code {cls}.{detail} out of range")
        if not 0 <= self.message_id <= 0xFFFF:
            raise InvalidMessage("message_id must fit in 16 bits")
        if len(self.token) > 8:
            raise InvalidMessage(f"token length {len(self.token)} > 8")
        last = -1
        for number, _ in self.options:
            if number < 0:
                raise InvalidMessage("negative option number")
            if number < last:
                raise InvalidMessage("options must be sorted by option number")
            last = number
        if self.code == (0, 0) and (self.token or self.options or self.payload):
            raise InvalidMessage("Empty message carries no token, options or payload")

    # -- convenience accessors -------------------------------------------------

    @property
    def is_request(self) -> bool:
        return self.code[0] == 0 and self.code != (0, 0)

    @property
    def is_response(self) -> bool:
        return 2 <= self.code[0] <= 5

    @property
    def is_empty(self) -> bool:
        return self.code == (0, 0)

    def option_values(self, number: int) -> list[bytes]:
        return [v for n, v in self.options if n == number]

    def option(self, number: int) -> bytes | None:
        for n, v in self.options:
            if n == number:
                return v
        return None

    @property
    def uri_host(self) -> str | None:
        v = self.option(Option.URI_HOST)
        return None if v is None else v.decode("utf-8", "replace")

    @property
    def uri_path(self) -> tuple[str, ...]:
        return tuple(v.decode("utf-8", "replace") for v in self.option_values(Option.URI_PATH))

    @property
    def uri_query(self) -> tuple[str, ...]:
        return tuple(v.decode("utf-8", "replace") for v in self.option_values(Option.URI_QUERY))

    @property
    def observe(self) -> int | None:
        v = self.option(Option.OBSERVE)
        return None if v is None else decode_uint(v)

    def replace(self, **changes) -> "CoapMessage":
        fields = dict(
            msg_type=self.msg_type,
            code=self.code,
            message_id=self.message_id,
            token=self.token,
            options=self.options,
            payload=self.payload,
        )
        fields.update(changes)
        return CoapMessage(**fields)

    def with_option(self, number: int, value: bytes) -> "CoapMessage":
        """Return a copy where every instance of ``number`` is replaced by ``value``."""
        kept = [o for o in self.options if o[0] != number]
        return self.replace(options=sort_options(kept + [(number, value)]))

    def without_option(self, number: int) -> "CoapMessage":
        return self.replace(options=tuple(o for o in self.options if o[0] != number))

    def __str__(self) -> str:
        return (
            f"{self.msg_type.name} {code_str(self.code)} mid={self.message_id} "
            f"tok={self.token.hex() or '-'} opts={[(n, v.hex()) for n, v in self.options]} "
            f"len={len(self.payload)}"
        )


def check_supported(msg: CoapMessage) -> None:
    """Raise InvalidMessage if ``msg`` leaves the supported code/option subset."""
    if msg.code not in SUPPORTED_CODES:
        raise InvalidMessage(f"unsupported code {code_str(msg.code)}")
    seen: set[int] = set()
    for number, value in msg.options:
        try:
            opt = Option(number)
        except ValueError:
            raise InvalidMessage(f"unsupported option {number}") from None
        lo, hi = _OPTION_LENGTHS[opt]
        if not lo <= len(value) <= hi:
            raise InvalidMessage(f"option {opt.name} length {len(value)} outside {lo}..{hi}")
        if opt in _NON_REPEATABLE and opt in seen:
            raise InvalidMessage(f"option {opt.name} is not repeatable")
        seen.add(opt)


def _ext(value: int) -> tuple[int, bytes]:
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes((value - 13,))
    if value < 65805:
        return 14, struct.pack("!H", value - 269)
    raise InvalidMessage(f"option delta/length {value} too large")


def encode(msg: CoapMessage) -> bytes:
    msg.validate()
    check_supported(msg)
    out = bytearray(
        struct.pack(
            "!BBH",
            (msg.version << 6) | (msg.msg_type << 4) | len(msg.token),
            (msg.code[0] << 5) | msg.code[1],
            msg.message_id,
        )
    )
    out += msg.token
    prev = 0
    for number, value in msg.options:
        d_nib, d_ext = _ext(number - prev)
        l_nib, l_ext = _ext(len(value))
        out.append((d_nib << 4) | l_nib)
        out += d_ext
        out += l_ext
        out += value
        prev = number
    if msg.payload:
        out.append(PAYLOAD_MARKER)
        out += msg.payload
    return bytes(out)


def _read_ext(nibble: int, data: bytes, pos: int) -> tuple[int, int]:
    if nibble < 13:
        return nibble, pos
    if nibble == 13:
        if pos + 1 > len(data):
            raise MalformedPacket("truncated extended option field")
        return data[pos] + 13, pos + 1
    if nibble == 14:
        if pos + 2 > len(data):
            raise MalformedPacket("truncated extended option field")
        return struct.unpack_from("!H", data, pos)[0] + 269, pos + 2
    raise MalformedPacket("reserved option nibble 15")


def decode(data: bytes, *, strict: bool = True) -> CoapMessage:
    """Parse a datagram.

    Raises MalformedPacket on any format error, and UnsupportedMessage (a
    MalformedPacket subclass) for out-of-subset content when ``strict``.
    """
    data = bytes(data)
    if len(data) < 4:
        raise MalformedPacket("truncated header")
    b0, b1, mid = struct.unpack_from("!BBH", data, 0)
    version, mtype, tkl = b0 >> 6, (b0 >> 4) & 0x3, b0 & 0x0F
    if version != VERSION:
        raise MalformedPacket(f"unknown version {version}")
    if tkl > 8:
        raise MalformedPacket(f"reserved token length {tkl}")
    code = (b1 >> 5, b1 & 0x1F)
    pos = 4
    if pos + tkl > len(data):
        raise MalformedPacket("truncated token")
    token = data[pos : pos + tkl]
    pos += tkl
    options: list[tuple[int, bytes]] = []
    number = 0
    payload = b""
    while pos < len(data):
        byte = data[pos]
        pos += 1
        if byte == PAYLOAD_MARKER:
            payload = data[pos:]
            if not payload:
                raise MalformedPacket("payload marker followed by empty payload")
            break
        delta, pos = _read_ext(byte >> 4, data, pos)
        length, pos = _read_ext(byte & 0x0F, data, pos)
        if pos + length > len(data):
            raise MalformedPacket("truncated option value")
        number += delta
        options.append((number, data[pos : pos + length]))
        pos += length
    if code == (0, 0) and (token or options or payload):
        raise MalformedPacket("Empty message with trailing bytes")
    msg = CoapMessage(MsgType(mtype), code, mid, token, tuple(options), payload)
    if strict:
        try:
            check_supported(msg)
        except InvalidMessage as exc:
            raise UnsupportedMessage(str(exc)) from None
    return msg
