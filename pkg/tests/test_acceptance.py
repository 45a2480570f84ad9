"""Acceptance criteria for the harness.

Each test is one criterion at its stated tolerance and prints one
pass/fail line; run with ``pytest tests/test_acceptance.py -v -s`` to see
them.  The end-to-end criteria share one 10-round, seed-fixed campaign
over the four bundled mocks.
"""

from __future__ import annotations

import functools
import random
import time
from fractions import Fraction

import pytest

from revstrike.analyzer import (
    correlation_matrix,
    field_stats,
    scanner_field_map,
    summary_rows,
)
from revstrike.fields import ALL_FIELDS
from revstrike.grammar import builtin_grammar, sample_template, validate
from revstrike.ledger import html_inert, instantiate, new_token
from revstrike.mocks import DESIGNED_TOPOLOGY
from revstrike.orchestrator import summarize

from test_analyzer import TOY_DATASET, phi_oracle
from test_wire import h11_parse


def criterion(label: str, budget_seconds: float | None = None):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            started = time.monotonic()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {label}")
                raise
            elapsed = time.monotonic() - started
            print(f"[PASS] {label} ({elapsed:.2f}s)")
            if budget_seconds is not None:
                assert elapsed < budget_seconds, f"{label}: {elapsed:.2f}s over budget"
        return run
    return wrap


@criterion("grammar closure: builtin validates clean, distributions sum to 1", 1.0)
def test_grammar_closure():
    grammar = builtin_grammar()
    assert validate(grammar) == []
    for name in grammar.nonterminals:
        total = sum((p.probability for p in grammar.by_lhs(name)), Fraction(0))
        assert abs(float(total) - 1.0) < 1e-9, name


@criterion("sampling statistics: 10k seeded templates match figure probabilities", 10.0)
def test_sampling_statistics():
    grammar = builtin_grammar()
    n = 10_000
    succ = vers11 = setc = locn = 0
    for seed in range(n):
        template = sample_template(grammar, seed)
        status = template.status_parts[0]
        if status.split(b" ")[1].startswith(b"200"):
            succ += 1
        if status.startswith(b"HTTP/1.1"):
            vers11 += 1
        for line in template.header_lines:
            first = line[0]
            if isinstance(first, bytes) and first.startswith(b"Set-Cookie: "):
                setc += 1
            if isinstance(first, bytes) and first.startswith(b"Location: "):
                locn += 1
    assert abs(succ / n - 0.554) <= 0.02
    assert abs(vers11 / n - 0.5) <= 0.02
    assert abs(setc / n - 0.175) <= 0.02
    assert abs(locn / n - 0.63) <= 0.02


@criterion("wire conformance: 1000 fuzzed responses round-trip the independent parser", 10.0)
def test_wire_conformance():
    grammar = builtin_grammar()
    rng = random.Random(987654321)
    for seed in range(1000):
        crafted = instantiate(
            sample_template(grammar, seed), rng, response_id=f"r{seed}", campaign_id="acc"
        )
        status, reason, headers, body = h11_parse(crafted.rendered)
        status_parts = crafted.status_line.split(b" ", 2)
        assert status == int(status_parts[1])
        assert reason == (status_parts[2] if len(status_parts) > 2 else b"")
        assert body == crafted.body
        parsed = dict(headers)
        for line in crafted.header_lines:
            name, _, value = line.partition(b":")
            assert parsed[name.lower()] == value.strip()


@criterion("token properties: one million tokens, zero collisions, HTML-inert", 30.0)
def test_token_properties():
    rng = random.Random(0xACCE97)
    seen = set()
    for _ in range(1_000_000):
        token = new_token(rng)
        seen.add(token)
        assert html_inert(token)
    assert len(seen) == 1_000_000


class TestEndToEndCampaign:
    """Fixture campaign: 10 rounds, fixed seed, four bundled mocks."""

    @staticmethod
    def trials_for(phase2, adapter):
        return [t for t in phase2.trials if t.adapter == adapter]

    @criterion("campaign runtime under 60 s")
    def test_campaign_runtime(self, fixture_campaign):
        assert fixture_campaign["elapsed"] < 60.0

    @criterion("echoing mock: T and V equal designed topology, payload 1 confirms")
    def test_echoing(self, fixture_campaign):
        rows = {r.name: r for r in summary_rows(scanner_field_map(fixture_campaign["store"]))}
        expected_t, expected_v = DESIGNED_TOPOLOGY["echoing"]
        assert (rows["echoing"].tainted, rows["echoing"].vulnerable) == (expected_t, expected_v)
        trials = self.trials_for(fixture_campaign["phase2"], "echoing")
        assert len(trials) == expected_v  # first payload confirms, later ones untried
        assert all(t.confirmed and t.payload_id == "img-onerror" for t in trials)

    @criterion("escaping mock: tainted but not vulnerable, every trial escaped")
    def test_escaping(self, fixture_campaign):
        rows = {r.name: r for r in summary_rows(scanner_field_map(fixture_campaign["store"]))}
        expected_t, expected_v = DESIGNED_TOPOLOGY["escaping"]
        assert (rows["escaping"].tainted, rows["escaping"].vulnerable) == (expected_t, expected_v)
        trials = self.trials_for(fixture_campaign["phase2"], "escaping")
        assert len(trials) == expected_t * 3  # all payloads tried on every field
        assert all(not t.confirmed and t.reason == "escaped" for t in trials)

    @criterion("urlenc mock: vulnerable only through the non-breaking-space variant")
    def test_urlenc(self, fixture_campaign):
        rows = {r.name: r for r in summary_rows(scanner_field_map(fixture_campaign["store"]))}
        expected_t, expected_v = DESIGNED_TOPOLOGY["urlenc"]
        assert (rows["urlenc"].tainted, rows["urlenc"].vulnerable) == (expected_t, expected_v)
        trials = self.trials_for(fixture_campaign["phase2"], "urlenc")
        assert [t.payload_id for t in trials] == ["img-onerror", "img-onerror-nbsp"]
        assert [t.confirmed for t in trials] == [False, True]
        vuln_payloads = {v.payload_id for v in fixture_campaign["store"].iter_vulns()
                         if v.payload_id.endswith("nbsp")}
        assert vuln_payloads == {"img-onerror-nbsp"}

    @criterion("truncating mock: not vulnerable, truncation detected")
    def test_truncating(self, fixture_campaign):
        rows = {r.name: r for r in summary_rows(scanner_field_map(fixture_campaign["store"]))}
        expected_t, expected_v = DESIGNED_TOPOLOGY["truncating"]
        assert (rows["truncating"].tainted, rows["truncating"].vulnerable) == (
            expected_t,
            expected_v,
        )
        trials = self.trials_for(fixture_campaign["phase2"], "truncating")
        assert trials and not any(t.confirmed for t in trials)
        truncated = [t for t in trials if t.reason == "truncated"]
        assert len(truncated) == 2  # both image payloads lose their tag close
        assert {t.payload_id for t in truncated} == {"img-onerror", "img-onerror-nbsp"}

    @criterion("ledger integrity: audit clean after the full campaign")
    def test_ledger_integrity(self, fixture_campaign):
        report = fixture_campaign["store"].audit()
        assert report.ok, report.issues
        assert report.records_checked > 100

    @criterion("monotonicity: V <= T per scanner and per field")
    def test_monotonicity(self, fixture_campaign):
        mapping = scanner_field_map(fixture_campaign["store"])
        for row in summary_rows(mapping):
            assert row.vulnerable <= row.tainted, row.name
        stats = field_stats(mapping)
        for field_id in ALL_FIELDS:
            count = stats.per_field[field_id]
            assert count.vulnerable <= count.tainted, field_id
            assert count.vulnerable_occurrences <= count.tainted_occurrences, field_id

    @criterion("summary table: exact designed (T, V) integers, exit code 2")
    def test_summary_exact(self, fixture_campaign):
        table, exit_code = summarize(fixture_campaign["store"])
        assert exit_code == 2
        rows = {r.name: (r.tainted, r.vulnerable)
                for r in summary_rows(scanner_field_map(fixture_campaign["store"]))}
        assert rows == DESIGNED_TOPOLOGY


@criterion("correlation oracle: matrix equals brute-force phi within 1e-9")
def test_correlation_oracle():
    matrix = correlation_matrix(TOY_DATASET)
    scanners = sorted(TOY_DATASET)
    for i, field_i in enumerate(ALL_FIELDS):
        x = [1 if field_i in TOY_DATASET[s] else 0 for s in scanners]
        for j, field_j in enumerate(ALL_FIELDS):
            y = [1 if field_j in TOY_DATASET[s] else 0 for s in scanners]
            expected = phi_oracle(x, y)
            actual = matrix.values[i][j]
            if expected is None:
                assert actual is None
            else:
                assert abs(actual - expected) <= 1e-9
        # symmetry and unit diagonal on non-constant fields
        for j in range(len(ALL_FIELDS)):
            assert matrix.values[i][j] == matrix.values[j][i]
        if 0 < sum(x) < len(scanners):
            assert matrix.values[i][i] == pytest.approx(1.0)
