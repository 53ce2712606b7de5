import pytest
from hypothesis import given
from hypothesis import strategies as st

from coapicn.coap import CoapMessage, Code, MsgType, Option, encode_uint, sort_options
from coapicn.icn import NamedObjectId, digest8, digest32, scope
from coapicn.nap import (
    MalformedNotice,
    PendingNotice,
    RequestFingerprint,
    derive_ids,
    feed_id,
    notice_id,
    request_scope,
    response_id,
)


def get(token=b"T1", mid=1, host="sensor", path=("temp",), observe=None, query=()):
    opts = [(Option.URI_HOST, host.encode())] + [(Option.URI_PATH, p.encode()) for p in path]
    opts += [(Option.URI_QUERY, q.encode()) for q in query]
    if observe is not None:
        opts.append((Option.OBSERVE, encode_uint(observe)))
    return CoapMessage(MsgType.CON, Code.GET.value, mid, token, sort_options(opts))


class TestNames:
    def test_scope_segments_are_digest8(self):
        assert request_scope("sensor") == (digest8("coap"), digest8("sensor"))
        assert len(digest8("x")) == 8 and len(digest32("x")) == 32

    def test_id_invariants(self):
        with pytest.raises(ValueError):
            NamedObjectId((), digest32("x"))
        with pytest.raises(ValueError):
            NamedObjectId((b"short",), digest32("x"))
        with pytest.raises(ValueError):
            NamedObjectId(scope("a"), b"x" * 31)


class TestFingerprint:
    def test_token_and_mid_excluded(self):
        assert RequestFingerprint.from_message(get(b"T1", 1)) == RequestFingerprint.from_message(get(b"T2", 99))

    @pytest.mark.parametrize(
        "other",
        [get(host="other"), get(path=("hum",)), get(query=("u=c",)), get(observe=0)],
        ids=["host", "path", "query", "observe"],
    )
    def test_identity_fields_matter(self, other):
        assert derive_ids(RequestFingerprint.from_message(get())) != derive_ids(RequestFingerprint.from_message(other))

    def test_observe_cancel_is_not_a_registration(self):
        assert not RequestFingerprint.from_message(get(observe=1)).observe

    def test_discriminator_separates(self):
        a = RequestFingerprint.from_message(get(), discriminator=b"1")
        b = RequestFingerprint.from_message(get(), discriminator=b"2")
        assert derive_ids(a)[0] != derive_ids(b)[0]

    def test_canonical_is_unambiguous(self):
        a = RequestFingerprint(Code.GET.value, "h", ("ab",))
        b = RequestFingerprint(Code.GET.value, "h", ("a", "b"))
        assert a.canonical() != b.canonical()

    def test_ids_live_in_host_scope(self):
        req, rsp = derive_ids(RequestFingerprint.from_message(get()))
        assert req.scope_path == request_scope("sensor")
        assert rsp.scope_path[:2] == req.scope_path and rsp.scope_path != req.scope_path
        assert rsp == response_id(req)
        assert response_id(req, "lamp1") != response_id(req, "lamp2")

    def test_control_ids_are_distinct(self):
        req, _ = derive_ids(RequestFingerprint.from_message(get()))
        assert notice_id(req, "sensor", "nap1") != notice_id(req, "sensor", "nap2")
        assert feed_id("rd") != feed_id("rd2")


class TestPendingNotice:
    @given(st.binary(min_size=32, max_size=32), st.binary(max_size=8), st.text(max_size=12), st.text(max_size=12))
    def test_roundtrip(self, fp, token, issuer, responder):
        n = PendingNotice(fp, token, issuer, responder)
        assert PendingNotice.decode(n.encode()) == n

    @pytest.mark.parametrize("data", [b"", b"x" * 32, b"x" * 32 + b"\x05ab", b"x" * 32 + b"\x00\x00"])
    def test_truncated(self, data):
        with pytest.raises(MalformedNotice):
            PendingNotice.decode(data)

    def test_token_limit(self):
        with pytest.raises(ValueError):
            PendingNotice(b"x" * 32, b"123456789", "a", "b")
