"""CoAP wire codec and CoRE link-format support."""

from .linkformat import LinkFormatError, ResourceLink, parse_link_format, serialize_link_format
from .message import (
    CoapError,
    CoapMessage,
    Code,
    InvalidMessage,
    MalformedPacket,
    MsgType,
    Option,
    UnsupportedMessage,
    check_supported,
    code_str,
    decode,
    decode_uint,
    encode,
    encode_uint,
    sort_options,
)

__all__ = [
    "CoapError",
    "CoapMessage",
    "Code",
    "InvalidMessage",
    "LinkFormatError",
    "MalformedPacket",
    "MsgType",
    "Option",
    "ResourceLink",
    "UnsupportedMessage",
    "check_supported",
    "code_str",
    "decode",
    "decode_uint",
    "encode",
    "encode_uint",
    "parse_link_format",
    "serialize_link_format",
    "sort_options",
]
