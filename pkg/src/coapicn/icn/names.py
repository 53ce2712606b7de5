"""Scoped flat identifiers for named objects."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

DIGEST_ALGORITHM = "sha256"
SCOPE_LEN = 8
RID_LEN = 32


def _as_bytes(data: bytes | str) -> bytes:
    return data.encode("utf-8") if isinstance(data, str) else bytes(data)


def digest8(data: bytes | str) -> bytes:
    """Scope segment: first 8 bytes of SHA-256."""
    return hashlib.sha256(_as_bytes(data)).digest()[:SCOPE_LEN]


def digest32(data: bytes | str) -> bytes:
    return hashlib.sha256(_as_bytes(data)).digest()


@dataclass(frozen=True, order=True)
class NamedObjectId:
    scope_path: tuple[bytes, ...]
    rid: bytes

    def __post_init__(self) -> None:
        object.__setattr__(self, "scope_path", tuple(bytes(s) for s in self.scope_path))
        object.__setattr__(self, "rid", bytes(self.rid))
        if not self.scope_path:
            raise ValueError("scope_path must contain at least one scope")
        for seg in self.scope_path:
            if len(seg) != SCOPE_LEN:
                raise ValueError(f"scope segment must be {SCOPE_LEN} bytes, got {len(seg)}")
        if len(self.rid) != RID_LEN:
            raise ValueError(f"rid must be {RID_LEN} bytes, got {len(self.rid)}")

    def short(self) -> str:
        return "/".join(s.hex()[:4] for s in self.scope_path) + "/" + self.rid.hex()[:12]

    def __str__(self) -> str:
        return self.short()


def scope(*labels: bytes | str) -> tuple[bytes, ...]:
    return tuple(digest8(label) for label in labels)
