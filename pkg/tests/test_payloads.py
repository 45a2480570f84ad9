from __future__ import annotations

import random

import pytest

from revstrike.grammar import builtin_grammar, sample_template
from revstrike.ledger import instantiate
from revstrike.payloads import (
    CONTEXT_ATTR_DOUBLE,
    CONTEXT_ATTR_SINGLE,
    CONTEXT_TAG_TEXT,
    MAX_PAYLOAD_LENGTH,
    NBSP,
    NoSpaces,
    Payload,
    builtin_payloads,
    dump_payloads,
    load_payloads,
    nbsp_variant,
    payload_by_id,
)

from test_wire import h11_parse


class TestBuiltinPayloads:
    def test_priority_order_and_texts(self):
        p1, p2, p3 = builtin_payloads()
        assert p1.text == "\"'/><img src='x' onerror='alert(1)'/>"
        assert p1.length == 37
        assert p2.payload_id == "img-onerror-nbsp"
        assert p3.text == "<script>alert(1)</script>"

    def test_polyglot_context_coverage(self):
        p1 = builtin_payloads()[0]
        assert {CONTEXT_ATTR_SINGLE, CONTEXT_ATTR_DOUBLE, CONTEXT_TAG_TEXT} <= p1.contexts

    def test_length_budget(self):
        for p in builtin_payloads():
            assert p.length <= MAX_PAYLOAD_LENGTH

    def test_marker_required(self):
        with pytest.raises(ValueError):
            Payload("no-marker", "<script>boom()</script>", frozenset())

    def test_crlf_rejected(self):
        with pytest.raises(ValueError):
            Payload("crlf", "alert(1)\r\nSet-Cookie: x", frozenset())


class TestNbspVariant:
    def test_direct_substitution(self):
        p = Payload("toy", "alert(1) a b", frozenset())
        v = nbsp_variant(p)
        assert v.text == f"alert(1){NBSP}a{NBSP}b"
        assert v.variant_of == "toy"

    def test_paper_polyglot_space_counts(self):
        p1 = builtin_payloads()[0]
        # independent count on the source text
        assert p1.text.count(" ") == 2
        v = nbsp_variant(p1)
        assert v.text.count(" ") == 0
        assert v.text.count(NBSP) == 2

    def test_no_spaces_is_an_error(self):
        with pytest.raises(NoSpaces):
            nbsp_variant(payload_by_id("script-poc"))

    def test_hazard_recorded(self):
        v = builtin_payloads()[1]
        assert "url-encode-spaces" in v.hazards


class TestFramingSafety:
    def test_substitution_keeps_responses_parseable(self):
        from revstrike.stub import substitute_payload

        grammar = builtin_grammar()
        rng = random.Random(5)
        checked = 0
        for seed in range(40):
            crafted = instantiate(
                sample_template(grammar, seed), rng, response_id=f"r{seed}", campaign_id="t"
            )
            for binding in crafted.bindings:
                for payload in builtin_payloads():
                    mutated = substitute_payload(crafted, binding.token, payload.text)
                    status, _, headers, body = h11_parse(mutated)
                    assert status is not None
                    assert dict(headers)[b"connection"] == b"close"
                    if binding.field.value == "Body":
                        assert payload.text.encode("latin-1") in body
                    checked += 1
        assert checked > 50


class TestExchangeFormat:
    def test_roundtrip(self):
        dumped = dump_payloads(builtin_payloads())
        again = load_payloads(dumped)
        assert again == builtin_payloads()
