"""Tokens and the append-only campaign evidence databases.

A campaign directory holds one ndjson file per database plus a manifest:

    <campaign>/manifest            rng algorithm id, seeds, campaign id
    <campaign>/responses.ndjson    crafted responses with token bindings
    <campaign>/tainted.ndjson      tainted flows (token seen in a report)
    <campaign>/vulns.ndjson        confirmed vulnerable flows
    <campaign>/requests.ndjson     requests served by the test stub
    <campaign>/artifacts.ndjson    saved scan report metadata
    <campaign>/reports/            report artifact bodies

Every record line carries a content hash so an audit can prove that no
historical record was rewritten.  Writers append under an exclusive
per-file lock; readers tolerate a trailing partial line.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

from filelock import FileLock

from . import wire
from .fields import FieldId
from .grammar import Placeholder, ResponseTemplate

TOKEN_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")
TOKEN_LENGTH = 36

_HTML_SPECIALS = set('<>&"\' ')


def html_inert(value: str) -> bool:
    """True when no character of ``value`` carries meaning in HTML."""

    return not _HTML_SPECIALS.intersection(value)


class LedgerError(Exception):
    """Base error for ledger operations."""


class DuplicateToken(LedgerError):
    """A token was bound twice; the token RNG is being misused."""


class DanglingReference(LedgerError):
    """A record references another record that does not exist."""


def new_token(rng: random.Random) -> str:
    """A fresh version-4 UUID string from the given generator.

    Tokens are recognizable (122 random bits make chance collisions
    negligible) and uninterpreted: lowercase hex plus hyphens contains no
    character HTML assigns meaning to, so sanitizers pass them through.
    """

    bits = rng.getrandbits(128)
    bits &= ~(0xF << 76)
    bits |= 0x4 << 76  # version 4
    bits &= ~(0x3 << 62)
    bits |= 0x2 << 62  # RFC variant
    hex32 = f"{bits:032x}"
    return f"{hex32[:8]}-{hex32[8:12]}-{hex32[12:16]}-{hex32[16:20]}-{hex32[20:]}"


def is_token(value: str) -> bool:
    return bool(TOKEN_RE.match(value))


@dataclass(frozen=True)
class TokenBinding:
    token: str
    field: FieldId
    offset: int  # byte offset of the token in the rendered wire form


@dataclass(frozen=True)
class CraftedResponse:
    """A fully instantiated response plus its token bindings."""

    response_id: str
    campaign_id: str
    template_seed: int
    status_line: bytes
    header_lines: tuple[bytes, ...]
    body: bytes
    rendered: bytes
    bindings: tuple[TokenBinding, ...]
    created_at: str

    def binding_for(self, token: str) -> TokenBinding | None:
        for binding in self.bindings:
            if binding.token == token:
                return binding
        return None


@dataclass(frozen=True)
class TaintedFlow:
    """Evidence that a served token reappeared in a scan report."""

    token: str
    source_field: FieldId
    response_id: str
    sink_artifact: str
    sink_offset: int
    sink_excerpt: str
    round: int

    @property
    def flow_id(self) -> str:
        key = f"{self.token}|{self.sink_artifact}|{self.sink_offset}"
        return "f" + hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class VulnRecord:
    """A tainted flow confirmed exploitable by a specific payload."""

    flow_id: str
    payload_id: str
    method: str  # static-context | browser-alert
    evidence: str

    @property
    def vuln_id(self) -> str:
        key = f"{self.flow_id}|{self.payload_id}"
        return "v" + hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RequestLogEntry:
    timestamp: str
    peer: str
    request_line: str
    headers: tuple[str, ...]
    response_id: str


@dataclass(frozen=True)
class ArtifactRecord:
    artifact_id: str
    scanner: str
    phase: int
    round: int
    source: str
    fetched_at: str
    sha256: str


@dataclass
class AuditIssue:
    kind: str
    detail: str


@dataclass
class AuditReport:
    records_checked: int
    issues: list[AuditIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _record_hash(record: dict) -> str:
    canonical = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def instantiate(
    template: ResponseTemplate,
    token_rng: random.Random,
    *,
    response_id: str,
    campaign_id: str,
) -> CraftedResponse:
    """Replace every placeholder with a fresh token and render the wire form.

    Binding offsets point into the final rendered bytes; each token occurs
    exactly once, so offsets are recovered by direct search.
    """

    assignments: dict[str, str] = {}

    def fill(parts: tuple) -> bytes:
        out = b""
        for part in parts:
            if isinstance(part, Placeholder):
                token = assignments.setdefault(part.placeholder_id, new_token(token_rng))
                out += token.encode("ascii")
            else:
                out += part
        return out

    status_line = fill(template.status_parts)
    header_lines = tuple(fill(line) for line in template.header_lines)
    body = fill(template.body_parts)
    rendered = wire.frame(status_line, header_lines, body)

    bindings = []
    for placeholder in template.placeholders():
        token = assignments[placeholder.placeholder_id]
        offset = rendered.find(token.encode("ascii"))
        bindings.append(TokenBinding(token, placeholder.field, offset))

    return CraftedResponse(
        response_id=response_id,
        campaign_id=campaign_id,
        template_seed=template.seed,
        status_line=status_line,
        header_lines=header_lines,
        body=body,
        rendered=rendered,
        bindings=tuple(bindings),
        created_at=_now(),
    )


class CampaignStore:
    """Owner of one campaign directory and its append-only databases."""

    MANIFEST = "manifest"
    FILES = {
        "responses": "responses.ndjson",
        "tainted": "tainted.ndjson",
        "vulns": "vulns.ndjson",
        "requests": "requests.ndjson",
        "artifacts": "artifacts.ndjson",
        "trials": "trials.ndjson",
    }

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._file_locks = {
            name: FileLock(str(self.root / (filename + ".lock")))
            for name, filename in self.FILES.items()
        }
        self._responses: dict[str, CraftedResponse] = {}
        self._token_index: dict[str, str] = {}
        self._flow_ids: set[str] = set()
        self._vuln_ids: set[str] = set()
        self._artifact_ids: set[str] = set()
        self._seq = 0

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(
        cls,
        root: Path | str,
        campaign_id: str,
        master_seed: int,
        *,
        rng_algorithm: str,
        grammar_ref: str = "builtin",
    ) -> "CampaignStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        (root / "reports").mkdir(exist_ok=True)
        manifest = {
            "campaign_id": campaign_id,
            "master_seed": master_seed,
            "rng_algorithm": rng_algorithm,
            "grammar": grammar_ref,
            "created_at": _now(),
        }
        manifest_path = root / cls.MANIFEST
        if manifest_path.exists():
            raise LedgerError(f"campaign already exists at {root}")
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return cls.open(root)

    @classmethod
    def open(cls, root: Path | str) -> "CampaignStore":
        store = cls(root)
        if not (store.root / cls.MANIFEST).exists():
            raise LedgerError(f"no campaign manifest under {store.root}")
        store._load()
        return store

    @property
    def manifest(self) -> dict:
        return json.loads((self.root / self.MANIFEST).read_text(encoding="utf-8"))

    @property
    def campaign_id(self) -> str:
        return self.manifest["campaign_id"]

    def _load(self) -> None:
        for record in self._iter_records("responses"):
            crafted = _response_from_record(record)
            self._responses[crafted.response_id] = crafted
            for binding in crafted.bindings:
                self._token_index[binding.token] = crafted.response_id
        for record in self._iter_records("tainted"):
            self._flow_ids.add(record["flow_id"])
        for record in self._iter_records("vulns"):
            self._vuln_ids.add(record["vuln_id"])
        for record in self._iter_records("artifacts"):
            self._artifact_ids.add(record["artifact_id"])
        self._seq = len(self._responses)

    # -- low-level ndjson --------------------------------------------------

    def _append(self, name: str, record: dict) -> None:
        line = json.dumps(
            {"hash": _record_hash(record), **record},
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )
        path = self.root / self.FILES[name]
        with self._file_locks[name]:
            with path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def _iter_records(self, name: str) -> Iterator[dict]:
        path = self.root / self.FILES[name]
        if not path.exists():
            return
        data = path.read_text(encoding="utf-8")
        for line in data.split("\n"):
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                # trailing partial line from a concurrent writer
                continue
            yield record

    # -- responses ---------------------------------------------------------

    def next_response_id(self) -> str:
        with self._lock:
            self._seq += 1
            return f"r{self._seq:05d}"

    def record_response(self, crafted: CraftedResponse) -> str:
        for binding in crafted.bindings:
            if crafted.rendered.count(binding.token.encode("ascii")) != 1:
                raise LedgerError(f"token {binding.token} does not occur exactly once")
        with self._lock:
            for binding in crafted.bindings:
                if binding.token in self._token_index:
                    raise DuplicateToken(f"token {binding.token} already recorded")
            self._responses[crafted.response_id] = crafted
            for binding in crafted.bindings:
                self._token_index[binding.token] = crafted.response_id
        self._append("responses", _response_to_record(crafted))
        return crafted.response_id

    def get_response(self, response_id: str) -> CraftedResponse:
        try:
            return self._responses[response_id]
        except KeyError:
            raise DanglingReference(f"no response {response_id!r}") from None

    def lookup_by_token(self, token: str) -> str | None:
        return self._token_index.get(token.lower())

    def iter_responses(self) -> Iterator[CraftedResponse]:
        return iter(list(self._responses.values()))

    @property
    def token_count(self) -> int:
        return len(self._token_index)

    @property
    def response_count(self) -> int:
        return len(self._responses)

    # -- token matching ----------------------------------------------------

    def match_tokens(self, report_text: bytes) -> list[tuple[str, int]]:
        """Every occurrence of every stored token inside ``report_text``.

        Case-insensitive on the hex digits since some report generators
        upcase strings.  Offsets are strictly increasing per token.
        """

        haystack = report_text.lower()
        matches: list[tuple[str, int]] = []
        for token in self._token_index:
            needle = token.encode("ascii")
            start = 0
            while True:
                offset = haystack.find(needle, start)
                if offset < 0:
                    break
                matches.append((token, offset))
                start = offset + 1
        matches.sort(key=lambda pair: (pair[1], pair[0]))
        return matches

    # -- flows and vulns ---------------------------------------------------

    def record_tainted(self, flow: TaintedFlow) -> str:
        crafted = self._responses.get(flow.response_id)
        if crafted is None:
            raise DanglingReference(f"flow references unknown response {flow.response_id!r}")
        binding = crafted.binding_for(flow.token)
        if binding is None:
            raise DanglingReference(f"token {flow.token} not bound in {flow.response_id}")
        if binding.field != flow.source_field:
            raise LedgerError(
                f"flow field {flow.source_field} does not match binding {binding.field}"
            )
        flow_id = flow.flow_id
        with self._lock:
            if flow_id in self._flow_ids:
                return flow_id
            self._flow_ids.add(flow_id)
        record = {"flow_id": flow_id, **asdict(flow)}
        record["source_field"] = flow.source_field.value
        self._append("tainted", record)
        return flow_id

    def record_vuln(self, rec: VulnRecord) -> str:
        if rec.flow_id not in self._flow_ids:
            raise DanglingReference(f"vuln references unknown flow {rec.flow_id!r}")
        vuln_id = rec.vuln_id
        with self._lock:
            if vuln_id in self._vuln_ids:
                return vuln_id
            self._vuln_ids.add(vuln_id)
        self._append("vulns", {"vuln_id": vuln_id, **asdict(rec)})
        return vuln_id

    def iter_tainted(self) -> Iterator[TaintedFlow]:
        for record in self._iter_records("tainted"):
            yield TaintedFlow(
                token=record["token"],
                source_field=FieldId(record["source_field"]),
                response_id=record["response_id"],
                sink_artifact=record["sink_artifact"],
                sink_offset=record["sink_offset"],
                sink_excerpt=record["sink_excerpt"],
                round=record["round"],
            )

    def iter_vulns(self) -> Iterator[VulnRecord]:
        for record in self._iter_records("vulns"):
            yield VulnRecord(
                flow_id=record["flow_id"],
                payload_id=record["payload_id"],
                method=record["method"],
                evidence=record["evidence"],
            )

    # -- requests, trials and artifacts ----------------------------------------

    def record_request(self, entry: RequestLogEntry) -> None:
        self._append("requests", asdict(entry))

    def iter_requests(self) -> Iterator[dict]:
        return self._iter_records("requests")

    def record_trial(self, trial: dict) -> None:
        self._append("trials", trial)

    def iter_trials(self) -> Iterator[dict]:
        for record in self._iter_records("trials"):
            record.pop("hash", None)
            yield record

    def record_artifact(self, meta: ArtifactRecord, content: bytes) -> str:
        path = self.root / "reports" / f"{meta.artifact_id}.html"
        if meta.sha256 != hashlib.sha256(content).hexdigest():
            raise LedgerError("artifact hash does not match content")
        path.write_bytes(content)
        with self._lock:
            self._artifact_ids.add(meta.artifact_id)
        self._append("artifacts", asdict(meta))
        return meta.artifact_id

    def artifact_content(self, artifact_id: str) -> bytes:
        path = self.root / "reports" / f"{artifact_id}.html"
        if not path.exists():
            raise DanglingReference(f"no artifact {artifact_id!r}")
        return path.read_bytes()

    def iter_artifacts(self) -> Iterator[ArtifactRecord]:
        for record in self._iter_records("artifacts"):
            record.pop("hash", None)
            yield ArtifactRecord(**record)

    # -- audit ---------------------------------------------------------------

    def audit(self) -> AuditReport:
        """Full-ledger integrity check.

        Verifies per-record content hashes (append-only proof), referential
        integrity across the databases, token uniqueness, and artifact body
        hashes.
        """

        report = AuditReport(records_checked=0)
        response_ids: set[str] = set()
        tokens_seen: dict[str, str] = {}
        flow_ids: set[str] = set()
        artifact_ids: set[str] = set()

        def check_hash(name: str, record: dict) -> dict:
            report.records_checked += 1
            stored = record.pop("hash", None)
            if stored != _record_hash(record):
                report.issues.append(
                    AuditIssue("mutated-record", f"{name}: hash mismatch on {record}")
                )
            return record

        for raw in self._iter_records("responses"):
            record = check_hash("responses", raw)
            response_ids.add(record["response_id"])
            for binding in record["bindings"]:
                token = binding["token"]
                if token in tokens_seen:
                    report.issues.append(
                        AuditIssue("duplicate-token", f"{token} bound in {tokens_seen[token]} and {record['response_id']}")
                    )
                tokens_seen[token] = record["response_id"]

        for raw in self._iter_records("artifacts"):
            record = check_hash("artifacts", raw)
            artifact_ids.add(record["artifact_id"])
            path = self.root / "reports" / f"{record['artifact_id']}.html"
            if not path.exists():
                report.issues.append(
                    AuditIssue("missing-artifact", f"{record['artifact_id']} has no stored body")
                )
            elif hashlib.sha256(path.read_bytes()).hexdigest() != record["sha256"]:
                report.issues.append(
                    AuditIssue("mutated-artifact", f"{record['artifact_id']} body hash mismatch")
                )

        for raw in self._iter_records("tainted"):
            record = check_hash("tainted", raw)
            flow_ids.add(record["flow_id"])
            if record["response_id"] not in response_ids:
                report.issues.append(
                    AuditIssue("dangling-flow", f"{record['flow_id']} -> {record['response_id']}")
                )
            if record["sink_artifact"] not in artifact_ids:
                report.issues.append(
                    AuditIssue("dangling-flow", f"{record['flow_id']} -> artifact {record['sink_artifact']}")
                )

        for raw in self._iter_records("vulns"):
            record = check_hash("vulns", raw)
            if record["flow_id"] not in flow_ids:
                report.issues.append(
                    AuditIssue("dangling-vuln", f"{record['vuln_id']} -> {record['flow_id']}")
                )

        for raw in self._iter_records("requests"):
            record = check_hash("requests", raw)
            if record["response_id"] and record["response_id"] not in response_ids:
                report.issues.append(
                    AuditIssue("unrecorded-response", f"request served {record['response_id']}")
                )

        for raw in self._iter_records("trials"):
            record = check_hash("trials", raw)
            if record["artifact_id"] not in artifact_ids:
                report.issues.append(
                    AuditIssue("dangling-trial", f"trial -> artifact {record['artifact_id']}")
                )

        return report


def _response_to_record(crafted: CraftedResponse) -> dict:
    return {
        "response_id": crafted.response_id,
        "campaign_id": crafted.campaign_id,
        "template_seed": crafted.template_seed,
        "status_line": crafted.status_line.decode("latin-1"),
        "header_lines": [line.decode("latin-1") for line in crafted.header_lines],
        "body": crafted.body.decode("latin-1"),
        "rendered": crafted.rendered.decode("latin-1"),
        "bindings": [
            {"token": b.token, "field": b.field.value, "offset": b.offset}
            for b in crafted.bindings
        ],
        "created_at": crafted.created_at,
    }


def _response_from_record(record: dict) -> CraftedResponse:
    return CraftedResponse(
        response_id=record["response_id"],
        campaign_id=record["campaign_id"],
        template_seed=record["template_seed"],
        status_line=record["status_line"].encode("latin-1"),
        header_lines=tuple(line.encode("latin-1") for line in record["header_lines"]),
        body=record["body"].encode("latin-1"),
        rendered=record["rendered"].encode("latin-1"),
        bindings=tuple(
            TokenBinding(b["token"], FieldId(b["field"]), b["offset"])
            for b in record["bindings"]
        ),
        created_at=record["created_at"],
    )
