from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revstrike.fields import FieldId
from revstrike.grammar import RNG_ALGORITHM, builtin_grammar, sample_template
from revstrike.ledger import (
    CampaignStore,
    DanglingReference,
    DuplicateToken,
    TOKEN_RE,
    TaintedFlow,
    VulnRecord,
    html_inert,
    instantiate,
    is_token,
    new_token,
)

ZERO_VARIABLE_SEED = 43082  # derives a template without placeholders


@pytest.fixture
def store(tmp_path):
    return CampaignStore.create(
        tmp_path / "camp", "test-campaign", 99, rng_algorithm=RNG_ALGORITHM
    )


def craft(store, seed, rng=None):
    template = sample_template(builtin_grammar(), seed)
    return instantiate(
        template,
        rng or random.Random(seed),
        response_id=store.next_response_id(),
        campaign_id="test-campaign",
    )


def record_artifact(store, artifact_id, content=b"<html>report</html>", scanner="mock"):
    import hashlib

    from revstrike.ledger import ArtifactRecord

    store.record_artifact(
        ArtifactRecord(
            artifact_id=artifact_id,
            scanner=scanner,
            phase=1,
            round=1,
            source="http://stub/",
            fetched_at="2026-01-01T00:00:00Z",
            sha256=hashlib.sha256(content).hexdigest(),
        ),
        content,
    )


class TestTokens:
    def test_paper_shaped_uuid_is_valid(self):
        assert is_token("018d54ae-b0d3-4e89-aa32-6f5106e00683")

    def test_generated_tokens_match_uuid4_shape(self):
        rng = random.Random(1)
        for _ in range(200):
            token = new_token(rng)
            assert TOKEN_RE.match(token)
            assert token[14] == "4"  # version nibble
            assert token[19] in "89ab"  # variant nibble

    def test_deterministic_under_fixed_seed(self):
        a = [new_token(random.Random(7)) for _ in range(5)]
        b = [new_token(random.Random(7)) for _ in range(5)]
        assert a == b

    def test_no_duplicates_at_test_scale(self):
        rng = random.Random(2)
        tokens = {new_token(rng) for _ in range(50_000)}
        assert len(tokens) == 50_000

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=2**63 - 1))
    def test_tokens_are_html_inert(self, seed):
        assert html_inert(new_token(random.Random(seed)))


class TestResponses:
    def test_record_then_lookup_by_token(self, store):
        crafted = craft(store, 42)
        assert crafted.bindings, "seed 42 should produce tokens"
        response_id = store.record_response(crafted)
        for binding in crafted.bindings:
            assert store.lookup_by_token(binding.token) == response_id
        assert store.get_response(response_id) == crafted

    def test_duplicate_token_rejected(self, store):
        rng = random.Random(3)
        first = craft(store, 42, rng)
        store.record_response(first)
        clone = craft(store, 42, random.Random(3))  # same token stream
        with pytest.raises(DuplicateToken):
            store.record_response(clone)

    def test_empty_bindings_response_accepted(self, store):
        crafted = craft(store, ZERO_VARIABLE_SEED)
        assert crafted.bindings == ()
        store.record_response(crafted)
        assert store.match_tokens(b"any report text at all") == []

    def test_reload_restores_index(self, store, tmp_path):
        crafted = craft(store, 42)
        store.record_response(crafted)
        again = CampaignStore.open(store.root)
        assert again.lookup_by_token(crafted.bindings[0].token) == crafted.response_id


class TestMatchTokens:
    def test_verbatim_occurrence(self, store):
        crafted = craft(store, 42)
        store.record_response(crafted)
        token = crafted.bindings[0].token
        report = b"<td>" + token.encode() + b"</td>"
        assert store.match_tokens(report) == [(token, 4)]

    def test_uppercased_report_still_matches(self, store):
        crafted = craft(store, 42)
        store.record_response(crafted)
        token = crafted.bindings[0].token
        report = b"cell " + token.upper().encode() + b" end"

        # independent oracle: lowercase both sides and scan
        expected = report.lower().find(token.encode())
        assert store.match_tokens(report) == [(token, expected)]

    def test_split_token_is_not_matched(self, store):
        crafted = craft(store, 42)
        store.record_response(crafted)
        token = crafted.bindings[0].token
        report = token[:18].encode() + b"<b>" + token[18:].encode()
        assert store.match_tokens(report) == []

    def test_repeated_occurrences_strictly_increasing(self, store):
        crafted = craft(store, 42)
        store.record_response(crafted)
        token = crafted.bindings[0].token.encode()
        report = b"a" + token + b"b" + token
        offsets = [off for _, off in store.match_tokens(report)]
        assert offsets == sorted(offsets) and len(offsets) == 2


class TestFlowsAndVulns:
    def make_flow(self, store, crafted):
        binding = crafted.bindings[0]
        return TaintedFlow(
            token=binding.token,
            source_field=binding.field,
            response_id=crafted.response_id,
            sink_artifact="a1",
            sink_offset=10,
            sink_excerpt="...",
            round=1,
        )

    def test_idempotent_on_identical_records(self, store):
        crafted = craft(store, 42)
        store.record_response(crafted)
        record_artifact(store, "a1")
        flow = self.make_flow(store, crafted)
        first = store.record_tainted(flow)
        second = store.record_tainted(flow)
        assert first == second
        lines = (store.root / "tainted.ndjson").read_text().strip().split("\n")
        assert len(lines) == 1

    def test_vuln_requires_recorded_flow(self, store):
        with pytest.raises(DanglingReference):
            store.record_vuln(VulnRecord("f-missing", "img-onerror", "static-context", ""))

    def test_flow_requires_recorded_response(self, store):
        crafted = craft(store, 42)  # never recorded
        with pytest.raises(DanglingReference):
            store.record_tainted(self.make_flow(store, crafted))

    def test_flow_field_must_match_binding(self, store):
        crafted = craft(store, 42)
        store.record_response(crafted)
        binding = crafted.bindings[0]
        wrong = FieldId.BODY if binding.field != FieldId.BODY else FieldId.SERVER
        flow = TaintedFlow(
            token=binding.token,
            source_field=wrong,
            response_id=crafted.response_id,
            sink_artifact="a1",
            sink_offset=0,
            sink_excerpt="",
            round=1,
        )
        with pytest.raises(Exception):
            store.record_tainted(flow)


class TestAudit:
    def populate(self, store):
        crafted = craft(store, 42)
        store.record_response(crafted)
        record_artifact(store, "a1")
        binding = crafted.bindings[0]
        flow = TaintedFlow(
            token=binding.token,
            source_field=binding.field,
            response_id=crafted.response_id,
            sink_artifact="a1",
            sink_offset=5,
            sink_excerpt="x",
            round=1,
        )
        store.record_tainted(flow)
        store.record_vuln(VulnRecord(flow.flow_id, "img-onerror", "static-context", "ev"))
        return flow

    def test_clean_after_writes(self, store):
        self.populate(store)
        report = store.audit()
        assert report.ok
        assert report.records_checked >= 4

    def test_detects_mutated_record(self, store):
        self.populate(store)
        path = store.root / "tainted.ndjson"
        line = json.loads(path.read_text())
        line["round"] = 999  # rewrite history
        path.write_text(json.dumps(line) + "\n")
        report = store.audit()
        assert any(issue.kind == "mutated-record" for issue in report.issues)

    def test_detects_mutated_artifact_body(self, store):
        self.populate(store)
        (store.root / "reports" / "a1.html").write_bytes(b"<html>edited</html>")
        report = store.audit()
        assert any(issue.kind == "mutated-artifact" for issue in report.issues)

    def test_detects_dangling_vuln(self, store):
        self.populate(store)
        ghost = {"vuln_id": "vghost", "flow_id": "f-ghost", "payload_id": "p", "method": "m", "evidence": ""}
        from revstrike.ledger import _record_hash

        line = json.dumps({"hash": _record_hash(ghost), **ghost}, sort_keys=True)
        with (store.root / "vulns.ndjson").open("a") as fh:
            fh.write(line + "\n")
        report = store.audit()
        assert any(issue.kind == "dangling-vuln" for issue in report.issues)

    def test_reader_tolerates_trailing_partial_line(self, store):
        self.populate(store)
        with (store.root / "tainted.ndjson").open("a") as fh:
            fh.write('{"flow_id": "truncated-wri')
        flows = list(store.iter_tainted())
        assert len(flows) == 1
