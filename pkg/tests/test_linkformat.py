import pytest
from hypothesis import given
from hypothesis import strategies as st

from coapicn.coap import LinkFormatError, ResourceLink, parse_link_format, serialize_link_format


class TestParse:
    def test_simple(self):
        links = parse_link_format(b'</temp>;rt="temperature";obs,</a/b>;ct=0')
        assert [l.path for l in links] == ["/temp", "/a/b"]
        assert links[0].attributes == {"rt": "temperature", "obs": ""}
        assert links[1].get("ct") == "0"

    def test_quoted_separators(self):
        (link,) = parse_link_format('</x>;title="a, b; \\"c\\""')
        assert link.get("title") == 'a, b; "c"'

    def test_empty_payload(self):
        assert parse_link_format(b"") == []
        assert parse_link_format("  ") == []

    @pytest.mark.parametrize(
        "text",
        [
            "/temp",                  # no angle brackets
            "<temp>",                 # relative target
            "</>",                    # empty path
            '</a>;rt="x',             # unterminated quote
            "</a>;rt=1;rt=2",         # duplicate attribute
            "</a>;",                  # empty parameter
            "</a>;=x",                # nameless parameter
            "</a",                    # unbalanced
            "</a>>",
            '</a>;rt=x"y',
        ],
    )
    def test_rejects(self, text):
        with pytest.raises(LinkFormatError):
            parse_link_format(text)

    def test_link_needs_path(self):
        with pytest.raises(LinkFormatError):
            ResourceLink(())


segment = st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters='/<>,;"\\'), min_size=1, max_size=8)
attr_name = st.text("abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=6)
attr_value = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)


@given(st.lists(st.tuples(st.lists(segment, min_size=1, max_size=3), st.dictionaries(attr_name, attr_value, max_size=4)),
                min_size=1, max_size=5))
def test_roundtrip(items):
    links = [ResourceLink(tuple(path), attrs) for path, attrs in items]
    parsed = parse_link_format(serialize_link_format(links))
    assert [(l.uri_path, l.attributes) for l in parsed] == [(l.uri_path, l.attributes) for l in links]
