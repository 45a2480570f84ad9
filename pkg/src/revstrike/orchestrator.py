"""The test driver: runs scan rounds, collects reports, sequences phases.

Phase 1 starts the stub in fuzzing mode and lets each adapter scan it for
a configured number of rounds (default 10), recording every report and
every tainted flow.  Phase 2 walks the tainted flows, deduplicated per
(scanner, source field) to keep request counts polite, and replays the
stored response with each payload in priority order until the static
checker confirms one.
"""

from __future__ import annotations

import hashlib
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .analyzer import (
    METHOD_STATIC,
    ReportArtifact,
    check_exploit_static,
    find_tainted_flows,
    scanner_field_map,
    summary_rows,
    summary_table,
)
from .fields import FieldId
from .grammar import RNG_ALGORITHM, Pcfg, builtin_grammar, parse_grammar, validate
from .ledger import ArtifactRecord, CampaignStore, VulnRecord
from .payloads import Payload, builtin_payloads, payload_by_id
from .stub import BindFailure, Phase1Mode, Phase2Mode, probe, serve

RESPONSIBLE_USE_NOTICE = (
    "NOTICE: this tool injects markup into the reporting pipeline of the\n"
    "scanning system it is pointed at. Use it only against systems you are\n"
    "authorized to test."
)


class ConfigError(ValueError):
    pass


class StubStartFailure(RuntimeError):
    """The stub could not be started; the campaign aborts."""


class ScannerAdapter(BaseModel):
    """How to trigger one scanning system and collect its report.

    ``command`` adapters run an argv template with ``{target}`` and
    ``{report_path}`` placeholders; ``http-api`` adapters hit a scan URL
    and then fetch the report URL, both templated on ``{target}``.
    """

    name: str
    kind: Literal["command", "http-api"]
    command: Optional[list[str]] = None
    scan_url: Optional[str] = None
    report_url: Optional[str] = None
    timeout: float = 60.0
    rounds: int = 10

    @field_validator("timeout")
    @classmethod
    def _positive_timeout(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("timeout must be positive")
        return value

    @field_validator("rounds")
    @classmethod
    def _minimum_rounds(cls, value: int) -> int:
        if value < 1:
            raise ValueError("rounds must be at least 1")
        return value

    @model_validator(mode="after")
    def _exactly_one_kind(self) -> "ScannerAdapter":
        if self.kind == "command":
            if not self.command or self.scan_url or self.report_url:
                raise ValueError("command adapters need argv and no URLs")
        else:
            if self.command or not (self.scan_url and self.report_url):
                raise ValueError("http-api adapters need scan and report URLs")
        return self


class CampaignConfig(BaseModel):
    campaign_id: str
    campaign_dir: str
    master_seed: int
    adapters: list[ScannerAdapter]
    bind: str = "127.0.0.1:0"
    target_template: str = "http://{stub}/"
    grammar_ref: str = "builtin"
    payload_ids: Optional[list[str]] = None
    politeness_delay: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _unique_adapter_names(self) -> "CampaignConfig":
        names = [a.name for a in self.adapters]
        if len(names) != len(set(names)):
            raise ValueError("adapter names must be unique; flows are attributed by name")
        return self

    def load_grammar(self) -> Pcfg:
        if self.grammar_ref == "builtin":
            grammar = builtin_grammar()
        else:
            grammar = parse_grammar(Path(self.grammar_ref).read_text(encoding="utf-8"))
        violations = validate(grammar)
        if violations:
            raise ConfigError(f"grammar {self.grammar_ref!r} is invalid: {violations[0]}")
        return grammar

    def load_payloads(self) -> list[Payload]:
        if self.payload_ids is None:
            return builtin_payloads()
        return [payload_by_id(pid) for pid in self.payload_ids]


@dataclass
class AdapterRunError:
    adapter: str
    round: int
    error: str


@dataclass
class Phase1Summary:
    campaign_id: str
    flows: int = 0
    fields_by_adapter: dict[str, list[str]] = field(default_factory=dict)
    rounds_by_adapter: dict[str, int] = field(default_factory=dict)
    errors: list[AdapterRunError] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrialResult:
    adapter: str
    source_field: str
    payload_id: str
    artifact_id: str
    confirmed: bool
    reason: str | None


@dataclass
class Phase2Summary:
    campaign_id: str
    trials: list[TrialResult] = field(default_factory=list)
    vulns: int = 0
    errors: list[AdapterRunError] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _adapter_seed(master_seed: int, adapter_name: str) -> int:
    key = f"{master_seed}:adapter:{adapter_name}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def open_or_create_store(config: CampaignConfig) -> CampaignStore:
    root = Path(config.campaign_dir)
    if (root / CampaignStore.MANIFEST).exists():
        return CampaignStore.open(root)
    return CampaignStore.create(
        root,
        config.campaign_id,
        config.master_seed,
        rng_algorithm=RNG_ALGORITHM,
        grammar_ref=config.grammar_ref,
    )


def _run_adapter_once(
    adapter: ScannerAdapter, target: str, work_dir: Path, tag: str
) -> bytes:
    """Trigger one scan and return the report bytes; raises on failure."""

    if adapter.kind == "command":
        report_path = work_dir / f"{tag}.html"
        argv = [part.format(target=target, report_path=str(report_path)) for part in adapter.command]
        result = subprocess.run(
            argv,
            timeout=adapter.timeout,
            capture_output=True,
        )
        if result.returncode != 0:
            raise RuntimeError(
                f"adapter exited {result.returncode}: {result.stderr.decode('utf-8', 'replace').strip()}"
            )
        return report_path.read_bytes()

    import httpx

    with httpx.Client(timeout=adapter.timeout, follow_redirects=False) as client:
        client.get(adapter.scan_url.format(target=target))
        resp = client.get(adapter.report_url.format(target=target))
        resp.raise_for_status()
        return resp.content


def _record_report(
    store: CampaignStore, adapter: str, phase: int, round_no: int, tag: str, content: bytes, source: str
) -> ReportArtifact:
    artifact = ReportArtifact(
        artifact_id=tag,
        scanner=adapter,
        round=round_no,
        content=content,
        fetched_at=_now(),
        source=source,
        phase=phase,
    )
    store.record_artifact(
        ArtifactRecord(
            artifact_id=artifact.artifact_id,
            scanner=adapter,
            phase=phase,
            round=round_no,
            source=source,
            fetched_at=artifact.fetched_at,
            sha256=hashlib.sha256(content).hexdigest(),
        ),
        content,
    )
    return artifact


def _start_stub(config: CampaignConfig, mode, store: CampaignStore):
    try:
        stub = serve(config.bind, mode, store)
    except BindFailure as exc:
        raise StubStartFailure(str(exc)) from exc
    target = config.target_template.format(stub=f"{stub.host}:{stub.port}")
    return stub, target


def _self_probe(store: CampaignStore, target: str) -> None:
    # The target URL must resolve to this campaign's stub: the probe has to
    # land a response in our own ledger.
    before = store.response_count
    raw = probe(target)
    if not raw.startswith(b"HTTP/1.") or store.response_count == before:
        raise StubStartFailure(
            f"self-probe of {target} did not reach this campaign's stub"
        )


def run_phase1(config: CampaignConfig, *, notice: bool = True) -> Phase1Summary:
    """Fuzz every adapter for its configured rounds and record tainted flows."""

    if notice:
        print(RESPONSIBLE_USE_NOTICE, file=sys.stderr)
    store = open_or_create_store(config)
    grammar = config.load_grammar()
    summary = Phase1Summary(campaign_id=store.campaign_id)
    work_dir = store.root / "work"
    work_dir.mkdir(exist_ok=True)

    for adapter in sorted(config.adapters, key=lambda a: a.name):
        stub, target = _start_stub(
            config, Phase1Mode(grammar, _adapter_seed(config.master_seed, adapter.name)), store
        )
        try:
            _self_probe(store, target)
            fields_seen: set[FieldId] = set()
            rounds_run = 0
            for round_no in range(1, adapter.rounds + 1):
                tag = f"{adapter.name}-p1-r{round_no:02d}"
                try:
                    content = _run_adapter_once(adapter, target, work_dir, tag)
                except subprocess.TimeoutExpired:
                    summary.errors.append(AdapterRunError(adapter.name, round_no, "timeout"))
                    continue
                except Exception as exc:
                    summary.errors.append(AdapterRunError(adapter.name, round_no, str(exc)))
                    continue
                rounds_run += 1
                artifact = _record_report(store, adapter.name, 1, round_no, tag, content, target)
                for flow in find_tainted_flows(artifact, store):
                    store.record_tainted(flow)
                    fields_seen.add(flow.source_field)
                    summary.flows += 1
            summary.fields_by_adapter[adapter.name] = sorted(f.value for f in fields_seen)
            summary.rounds_by_adapter[adapter.name] = rounds_run
        finally:
            stub.stop()
    return summary


def _dedupe_flows(store: CampaignStore) -> dict[str, dict[FieldId, object]]:
    """First tainted flow per (scanner, source field)."""

    artifact_scanner = {a.artifact_id: a.scanner for a in store.iter_artifacts()}
    chosen: dict[str, dict[FieldId, object]] = {}
    for flow in store.iter_tainted():
        scanner = artifact_scanner.get(flow.sink_artifact)
        if scanner is None:
            continue
        per_scanner = chosen.setdefault(scanner, {})
        current = per_scanner.get(flow.source_field)
        key = (flow.round, flow.sink_offset, flow.flow_id)
        if current is None or key < (current.round, current.sink_offset, current.flow_id):
            per_scanner[flow.source_field] = flow
    return chosen


def run_phase2(config: CampaignConfig, *, notice: bool = True) -> Phase2Summary:
    """Replay payloads over the tainted flows and record confirmed vulns."""

    if notice:
        print(RESPONSIBLE_USE_NOTICE, file=sys.stderr)
    store = open_or_create_store(config)
    payloads = config.load_payloads()
    summary = Phase2Summary(campaign_id=store.campaign_id)
    work_dir = store.root / "work"
    work_dir.mkdir(exist_ok=True)

    adapters = {a.name: a for a in config.adapters}
    flows_by_scanner = _dedupe_flows(store)

    for adapter_name in sorted(flows_by_scanner):
        adapter = adapters.get(adapter_name)
        if adapter is None:
            continue
        per_field = flows_by_scanner[adapter_name]
        first_trial = True  # delay between consecutive trials per scanner
        for field_id in sorted(per_field, key=lambda f: f.value):
            flow = per_field[field_id]
            for payload in payloads:
                if not first_trial and config.politeness_delay:
                    time.sleep(config.politeness_delay)
                first_trial = False
                tag = f"{adapter_name}-p2-{field_id.value}-{payload.payload_id}"
                stub, target = _start_stub(
                    config,
                    Phase2Mode(flow.response_id, flow.token, payload.payload_id, payload.text),
                    store,
                )
                try:
                    content = _run_adapter_once(adapter, target, work_dir, tag)
                except subprocess.TimeoutExpired:
                    summary.errors.append(AdapterRunError(adapter_name, 0, f"timeout on {tag}"))
                    continue
                except Exception as exc:
                    summary.errors.append(AdapterRunError(adapter_name, 0, f"{tag}: {exc}"))
                    continue
                finally:
                    stub.stop()
                artifact = _record_report(
                    store, adapter_name, 2, flow.round, tag, content, target
                )
                verdict = check_exploit_static(artifact.content, payload)
                summary.trials.append(
                    TrialResult(
                        adapter=adapter_name,
                        source_field=field_id.value,
                        payload_id=payload.payload_id,
                        artifact_id=artifact.artifact_id,
                        confirmed=verdict.confirmed,
                        reason=verdict.reason,
                    )
                )
                store.record_trial(
                    {
                        "adapter": adapter_name,
                        "source_field": field_id.value,
                        "payload_id": payload.payload_id,
                        "artifact_id": artifact.artifact_id,
                        "confirmed": verdict.confirmed,
                        "reason": verdict.reason,
                    }
                )
                if verdict.confirmed:
                    store.record_vuln(
                        VulnRecord(
                            flow_id=flow.flow_id,
                            payload_id=payload.payload_id,
                            method=METHOD_STATIC,
                            evidence=verdict.evidence,
                        )
                    )
                    summary.vulns += 1
                    break
    return summary


def summarize(store: CampaignStore) -> tuple[str, int]:
    """The Name/T/V table and an automation-friendly exit code.

    Exit code 0 when no vulnerability was confirmed, 2 otherwise.
    """

    mapping = scanner_field_map(store)
    rows = summary_rows(mapping)
    if not rows:
        return "", 0
    exit_code = 2 if any(r.vulnerable for r in rows) else 0
    return summary_table(rows), exit_code
