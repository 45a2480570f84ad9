"""Scan report analysis.

Phase 1: find stored tokens inside a report and turn each occurrence into
a tainted flow.  Phase 2: decide statically whether an injected payload
landed in an executable position.  Campaign level: per-field taint and
vulnerability statistics plus the field correlation matrices.

The static checker approximates the browser oracle so the whole suite can
run without a browser: a payload counts as confirmed only when lenient
HTML parsing attributes its detection marker to an event-handler
attribute of a real element or to the body of a properly closed script
element.  The browser checker, when available, upgrades confirmations to
method "browser-alert".
"""

from __future__ import annotations

from dataclasses import dataclass
from html.parser import HTMLParser

import numpy as np

from .fields import ALL_FIELDS, FieldId
from .ledger import CampaignStore, TaintedFlow
from .payloads import DETECTION_MARKER, Payload

EXCERPT_BYTES = 64

METHOD_STATIC = "static-context"
METHOD_BROWSER = "browser-alert"

REASON_ESCAPED = "escaped"
REASON_TRUNCATED = "truncated"
REASON_INERT = "inert"
REASON_ABSENT = "absent"


class ParseFailure(Exception):
    """The report could not be parsed even leniently."""


class InsufficientData(ValueError):
    """Correlation needs at least two scanners."""


@dataclass(frozen=True)
class ReportArtifact:
    """One saved scan report."""

    artifact_id: str
    scanner: str
    round: int
    content: bytes
    fetched_at: str
    source: str
    phase: int = 1

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("report artifact content must be non-empty")


# ---------------------------------------------------------------------------
# Phase 1: tainted flow detection
# ---------------------------------------------------------------------------


def find_tainted_flows(report: ReportArtifact, store: CampaignStore) -> list[TaintedFlow]:
    """One flow per token occurrence in the report.

    The source field comes from the ledger binding; the sink records the
    byte offset plus a 64-byte excerpt around the occurrence.
    """

    flows: list[TaintedFlow] = []
    for token, offset in store.match_tokens(report.content):
        response_id = store.lookup_by_token(token)
        if response_id is None:
            continue
        binding = store.get_response(response_id).binding_for(token)
        start = max(0, offset - (EXCERPT_BYTES - len(token)) // 2)
        excerpt = report.content[start : start + EXCERPT_BYTES].decode("utf-8", "replace")
        flows.append(
            TaintedFlow(
                token=token,
                source_field=binding.field,
                response_id=response_id,
                sink_artifact=report.artifact_id,
                sink_offset=offset,
                sink_excerpt=excerpt,
                round=report.round,
            )
        )
    return flows


# ---------------------------------------------------------------------------
# Phase 2: static exploitability check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StaticVerdict:
    confirmed: bool
    reason: str | None = None
    evidence: str = ""


class _ReportDom(HTMLParser):
    """Lenient single-pass walk collecting what the checker needs."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.handler_attrs: list[tuple[str, str, str]] = []  # tag, attr, value
        self.closed_scripts: list[str] = []
        self.text_chunks: list[str] = []
        self._script_body: list[str] | None = None

    def handle_starttag(self, tag, attrs):
        self._collect(tag, attrs)
        if tag == "script":
            self._script_body = []

    def handle_startendtag(self, tag, attrs):
        self._collect(tag, attrs)

    def handle_endtag(self, tag):
        if tag == "script" and self._script_body is not None:
            # Only a properly closed script executes; truncated script
            # data never sees its end tag and never reaches this list.
            self.closed_scripts.append("".join(self._script_body))
            self._script_body = None

    def handle_data(self, data):
        if self._script_body is not None:
            self._script_body.append(data)
        else:
            self.text_chunks.append(data)

    def _collect(self, tag, attrs):
        for name, value in attrs:
            if name and name.startswith("on") and value:
                self.handler_attrs.append((tag, name, value))


def check_exploit_static(report_html: bytes, payload: Payload) -> StaticVerdict:
    """Decide whether the payload reached an executable position.

    Unconfirmed verdicts carry a reason: "escaped" when the markup only
    survives entity-escaped inside text, "truncated" when the sink shows a
    strict prefix of the payload, "inert" when the full text is present
    but inactive, "absent" otherwise.
    """

    text = report_html.decode("utf-8", "replace")
    dom = _ReportDom()
    try:
        dom.feed(text)
        dom.close()
    except Exception as exc:  # html.parser rarely raises, but stay honest
        raise ParseFailure(str(exc)) from exc

    marker = DETECTION_MARKER
    for tag, name, value in dom.handler_attrs:
        if marker in value:
            return StaticVerdict(True, evidence=f"<{tag}> {name}={value!r}")
    for body in dom.closed_scripts:
        if marker in body:
            return StaticVerdict(True, evidence=f"<script> body {body.strip()!r}")

    joined_text = "".join(dom.text_chunks)
    if payload.text in joined_text or any(payload.text in chunk for chunk in dom.text_chunks):
        return StaticVerdict(False, REASON_ESCAPED, "payload survives only as text")
    if payload.text in text:
        return StaticVerdict(False, REASON_INERT, "payload present but not executable")

    floor = max(12, len(payload.text) // 2)
    for length in range(len(payload.text) - 1, floor - 1, -1):
        prefix = payload.text[:length]
        if prefix in text:
            return StaticVerdict(
                False, REASON_TRUNCATED, f"sink keeps only {length} of {len(payload.text)} characters"
            )
    return StaticVerdict(False, REASON_ABSENT, "no trace of the payload")


# ---------------------------------------------------------------------------
# Campaign statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldCount:
    tainted: int = 0
    vulnerable: int = 0
    tainted_occurrences: int = 0
    vulnerable_occurrences: int = 0


@dataclass(frozen=True)
class FieldStats:
    per_field: dict[FieldId, FieldCount]


@dataclass(frozen=True)
class ScannerFieldMap:
    """Per-scanner field indicator sets derived from the ledgers."""

    tainted: dict[str, set[FieldId]]
    vulnerable: dict[str, set[FieldId]]
    tainted_occurrences: dict[tuple[str, FieldId], int]
    vulnerable_occurrences: dict[tuple[str, FieldId], int]

    @property
    def scanners(self) -> list[str]:
        return sorted(set(self.tainted) | set(self.vulnerable))


def scanner_field_map(store: CampaignStore) -> ScannerFieldMap:
    artifact_scanner = {a.artifact_id: a.scanner for a in store.iter_artifacts()}
    flows_by_id: dict[str, TaintedFlow] = {}
    tainted: dict[str, set[FieldId]] = {}
    vulnerable: dict[str, set[FieldId]] = {}
    tainted_occ: dict[tuple[str, FieldId], int] = {}
    vulnerable_occ: dict[tuple[str, FieldId], int] = {}

    for flow in store.iter_tainted():
        flows_by_id[flow.flow_id] = flow
        scanner = artifact_scanner.get(flow.sink_artifact, flow.sink_artifact)
        tainted.setdefault(scanner, set()).add(flow.source_field)
        tainted_occ[(scanner, flow.source_field)] = (
            tainted_occ.get((scanner, flow.source_field), 0) + 1
        )

    for vuln in store.iter_vulns():
        flow = flows_by_id.get(vuln.flow_id)
        if flow is None:
            continue
        scanner = artifact_scanner.get(flow.sink_artifact, flow.sink_artifact)
        vulnerable.setdefault(scanner, set()).add(flow.source_field)
        vulnerable_occ[(scanner, flow.source_field)] = (
            vulnerable_occ.get((scanner, flow.source_field), 0) + 1
        )

    for scanner in vulnerable:
        tainted.setdefault(scanner, set())
    return ScannerFieldMap(tainted, vulnerable, tainted_occ, vulnerable_occ)


def field_stats(mapping: ScannerFieldMap) -> FieldStats:
    """Counts of scanners with at least one tainted/confirmed flow per field."""

    per_field: dict[FieldId, FieldCount] = {}
    for field_id in ALL_FIELDS:
        tainted = sum(1 for fields in mapping.tainted.values() if field_id in fields)
        vulnerable = sum(1 for fields in mapping.vulnerable.values() if field_id in fields)
        t_occ = sum(n for (_, f), n in mapping.tainted_occurrences.items() if f == field_id)
        v_occ = sum(n for (_, f), n in mapping.vulnerable_occurrences.items() if f == field_id)
        per_field[field_id] = FieldCount(tainted, vulnerable, t_occ, v_occ)
    return FieldStats(per_field)


@dataclass(frozen=True)
class CorrelationMatrix:
    fields: tuple[FieldId, ...]
    scanners: tuple[str, ...]
    indicators: tuple[tuple[int, ...], ...]  # scanners x fields
    values: tuple[tuple[float | None, ...], ...]  # fields x fields

    def entry(self, row: FieldId, col: FieldId) -> float | None:
        return self.values[self.fields.index(row)][self.fields.index(col)]


def correlation_matrix(indicators: dict[str, set[FieldId]]) -> CorrelationMatrix:
    """Pairwise Pearson correlation of the binary field indicators.

    On binary vectors this is the phi coefficient.  Entries where either
    indicator is constant across scanners are undefined and recorded as
    absent (None).
    """

    scanners = tuple(sorted(indicators))
    if len(scanners) < 2:
        raise InsufficientData("correlation needs at least two scanners")
    matrix = np.array(
        [[1 if f in indicators[s] else 0 for f in ALL_FIELDS] for s in scanners],
        dtype=float,
    )
    n_fields = len(ALL_FIELDS)
    constant = [bool(matrix[:, i].std() == 0) for i in range(n_fields)]
    values: list[list[float | None]] = []
    for i in range(n_fields):
        row: list[float | None] = []
        for j in range(n_fields):
            if constant[i] or constant[j]:
                row.append(None)
            elif i == j:
                row.append(1.0)
            else:
                row.append(float(np.corrcoef(matrix[:, i], matrix[:, j])[0, 1]))
        values.append(row)
    return CorrelationMatrix(
        fields=ALL_FIELDS,
        scanners=scanners,
        indicators=tuple(tuple(int(x) for x in row) for row in matrix),
        values=tuple(tuple(row) for row in values),
    )


def correlation_csv(matrix: CorrelationMatrix) -> str:
    header = "field," + ",".join(f.value for f in matrix.fields)
    lines = [header]
    for field_id, row in zip(matrix.fields, matrix.values):
        cells = ["" if v is None else f"{v:.6f}" for v in row]
        lines.append(field_id.value + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Campaign-level artifact emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    name: str
    tainted: int
    vulnerable: int


def summary_rows(mapping: ScannerFieldMap) -> list[SummaryRow]:
    rows = []
    for scanner in mapping.scanners:
        rows.append(
            SummaryRow(
                name=scanner,
                tainted=len(mapping.tainted.get(scanner, ())),
                vulnerable=len(mapping.vulnerable.get(scanner, ())),
            )
        )
    return rows


def summary_table(rows: list[SummaryRow]) -> str:
    width = max([len(r.name) for r in rows] + [4])
    out = [f"{'Name':<{width}}  {'T':>3} {'V':>3}"]
    for r in rows:
        t = str(r.tainted) if r.tainted else "-"
        v = str(r.vulnerable) if r.vulnerable else "-"
        out.append(f"{r.name:<{width}}  {t:>3} {v:>3}")
    return "\n".join(out)


def analyze_campaign(store: CampaignStore) -> dict:
    """Emit stats.ndjson, the two correlation CSVs and the summary table."""

    import json

    mapping = scanner_field_map(store)
    stats = field_stats(mapping)
    lines = []
    for field_id in ALL_FIELDS:
        count = stats.per_field[field_id]
        lines.append(
            json.dumps(
                {
                    "field": field_id.value,
                    "tainted_scanners": count.tainted,
                    "vulnerable_scanners": count.vulnerable,
                    "tainted_occurrences": count.tainted_occurrences,
                    "vulnerable_occurrences": count.vulnerable_occurrences,
                    "coefficient": "pearson-phi",
                }
            )
        )
    (store.root / "stats.ndjson").write_text("\n".join(lines) + "\n", encoding="utf-8")

    written = {"stats": str(store.root / "stats.ndjson")}
    for name, indicators in (("tainted", mapping.tainted), ("vulnerable", mapping.vulnerable)):
        path = store.root / f"correlation_{name}.csv"
        try:
            matrix = correlation_matrix(indicators)
        except InsufficientData:
            path.write_text("field," + ",".join(f.value for f in ALL_FIELDS) + "\n", encoding="utf-8")
        else:
            path.write_text(correlation_csv(matrix), encoding="utf-8")
        written[f"correlation_{name}"] = str(path)

    rows = summary_rows(mapping)
    table = summary_table(rows)
    (store.root / "summary.txt").write_text(table + "\n", encoding="utf-8")
    written["summary"] = str(store.root / "summary.txt")
    return {
        "rows": [(r.name, r.tainted, r.vulnerable) for r in rows],
        "table": table,
        "files": written,
    }
