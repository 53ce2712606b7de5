"""CoRE link-format (RFC 6690 subset) for resource descriptions.

Supported grammar::

    links  = link *( "," link )
    link   = "<" "/" path ">" *( ";" param )
    param  = name [ "=" ( token / quoted-string ) ]

Quoted strings may contain commas, semicolons and backslash escapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["LinkFormatError", "ResourceLink", "parse_link_format", "serialize_link_format"]


class LinkFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ResourceLink:
    uri_path: tuple[str, ...]
    attributes: dict[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "uri_path", tuple(self.uri_path))
        object.__setattr__(self, "attributes", dict(self.attributes))
        if not self.uri_path:
            raise LinkFormatError("link has an empty path")

    @property
    def path(self) -> str:
        return "/" + "/".join(self.uri_path)

    def get(self, name: str, default: str | None = None) -> str | None:
        return self.attributes.get(name, default)


def _split_top_level(text: str, sep: str) -> list[str]:
    """Split on ``sep`` outside of <...> and quoted strings."""
    parts: list[str] = []
    buf: list[str] = []
    in_quote = in_angle = escaped = False
    for ch in text:
        if escaped:
            buf.append(ch)
            escaped = False
            continue
        if in_quote:
            buf.append(ch)
            if ch == "\\":
                escaped = True
            elif ch == '"':
                in_quote = False
            continue
        if ch == '"':
            in_quote = True
        elif ch == "<":
            if in_angle:
                raise LinkFormatError("nested '<'")
            in_angle = True
        elif ch == ">":
            if not in_angle:
                raise LinkFormatError("unbalanced '>'")
            in_angle = False
        elif ch == sep and not in_angle:
            parts.append("".join(buf))
            buf = []
            continue
        buf.append(ch)
    if in_quote:
        raise LinkFormatError("unterminated quoted string")
    if in_angle:
        raise LinkFormatError("unbalanced '<'")
    parts.append("".join(buf))
    return parts


def _unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        out: list[str] = []
        it = iter(value[1:-1])
        for ch in it:
            if ch == "\\":
                ch = next(it, "")
            out.append(ch)
        return "".join(out)
    if '"' in value:
        raise LinkFormatError(f"stray quote in {value!r}")
    return value


def _parse_link(entry: str) -> ResourceLink:
    params = _split_top_level(entry.strip(), ";")
    target = params[0].strip()
    if not (target.startswith("<") and target.endswith(">")):
        raise LinkFormatError(f"link target must be enclosed in <>: {target!r}")
    uri = target[1:-1]
    if not uri.startswith("/"):
        raise LinkFormatError(f"link target must be an absolute path: {uri!r}")
    segments = [s for s in uri[1:].split("/")] if uri != "/" else []
    attributes: dict[str, str] = {}
    for raw in params[1:]:
        raw = raw.strip()
        if not raw:
            raise LinkFormatError("empty link parameter")
        name, eq, value = raw.partition("=")
        name = name.strip()
        if not name:
            raise LinkFormatError(f"parameter without a name: {raw!r}")
        if name in attributes:
            raise LinkFormatError(f"duplicate attribute {name!r}")
        attributes[name] = _unquote(value.strip()) if eq else ""
    return ResourceLink(tuple(segments), attributes)


def parse_link_format(payload: bytes | str) -> list[ResourceLink]:
    text = payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload
    if not text.strip():
        return []
    return [_parse_link(entry) for entry in _split_top_level(text, ",")]


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_link_format(links: list[ResourceLink]) -> bytes:
    parts = []
    for link in links:
        s = "<" + link.path + ">"
        for name, value in link.attributes.items():
            s += f";{name}={_quote(value)}" if value != "" else f";{name}"
        parts.append(s)
    return ",".join(parts).encode("utf-8")
