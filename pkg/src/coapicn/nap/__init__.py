"""Network attachment points translating between CoAP and the ICN fabric."""

from .handler import EntryMode, Mode, Nap, PendingEntry, ServerEntry
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

__all__ = [
    "EntryMode",
    "Mode",
    "Nap",
    "PendingEntry",
    "ServerEntry",
    "MalformedNotice",
    "PendingNotice",
    "RequestFingerprint",
    "derive_ids",
    "feed_id",
    "notice_id",
    "request_scope",
    "response_id",
]
