"""The control-plane FastAPI application.

Wraps the core package behind typed endpoints so campaigns can be driven
remotely (the stub typically lives on the scanned host while the analyst
works elsewhere).  The bundled CLI is a thin client of this API; by
default it mounts the app in-process, so no daemon is needed for local
use.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..analyzer import analyze_campaign
from ..grammar import (
    GrammarError,
    Placeholder,
    builtin_grammar,
    parse_grammar,
    sample_template,
    serialize_grammar,
    validate,
)
from ..ledger import CampaignStore, LedgerError
from ..orchestrator import (
    RNG_ALGORITHM,
    StubStartFailure,
    run_phase1,
    run_phase2,
    summarize,
)
from ..payloads import builtin_payloads, payload_by_id
from ..stub import BindFailure, Phase1Mode, Phase2Mode, serve
from . import models


class _StubRegistry:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._stubs: dict[str, tuple[str, object]] = {}
        self._seq = 0

    def add(self, mode_name: str, server) -> str:
        with self._lock:
            self._seq += 1
            stub_id = f"s{self._seq:04d}"
            self._stubs[stub_id] = (mode_name, server)
            return stub_id

    def remove(self, stub_id: str):
        with self._lock:
            return self._stubs.pop(stub_id, None)

    def items(self):
        with self._lock:
            return dict(self._stubs)

    def stop_all(self) -> None:
        for _, (_, server) in self.items().items():
            server.stop()
        with self._lock:
            self._stubs.clear()


def _open_store(campaign_dir: str) -> CampaignStore:
    try:
        return CampaignStore.open(Path(campaign_dir))
    except LedgerError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


def create_app() -> FastAPI:
    registry = _StubRegistry()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        registry.stop_all()

    app = FastAPI(title="revstrike control plane", version=__version__, lifespan=lifespan)

    @app.get("/health", response_model=models.HealthResponse)
    def health() -> models.HealthResponse:
        return models.HealthResponse(status="ok", version=__version__)

    # -- payloads -----------------------------------------------------------

    @app.get("/payloads", response_model=models.PayloadListResponse)
    def payloads() -> models.PayloadListResponse:
        return models.PayloadListResponse(
            payloads=[
                models.PayloadModel(
                    payload_id=p.payload_id,
                    text=p.text,
                    length=p.length,
                    contexts=sorted(p.contexts),
                    variant_of=p.variant_of,
                    hazards=sorted(p.hazards),
                )
                for p in builtin_payloads()
            ]
        )

    # -- grammar ------------------------------------------------------------

    def _load_grammar(text: str | None):
        if text is None:
            return builtin_grammar()
        try:
            return parse_grammar(text)
        except GrammarError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/grammar/validate", response_model=models.GrammarValidateResponse)
    def grammar_validate(req: models.GrammarValidateRequest) -> models.GrammarValidateResponse:
        grammar = _load_grammar(req.grammar_text)
        return models.GrammarValidateResponse(
            violations=[
                models.ViolationModel(
                    kind=v.kind, nonterminal=v.nonterminal, detail=v.detail, amount=v.amount
                )
                for v in validate(grammar)
            ]
        )

    @app.get("/grammar/builtin", response_model=models.GrammarExportResponse)
    def grammar_export() -> models.GrammarExportResponse:
        return models.GrammarExportResponse(grammar_text=serialize_grammar(builtin_grammar()))

    @app.post("/grammar/sample", response_model=models.GrammarSampleResponse)
    def grammar_sample(req: models.GrammarSampleRequest) -> models.GrammarSampleResponse:
        grammar = _load_grammar(req.grammar_text)
        violations = validate(grammar)
        if violations:
            raise HTTPException(status_code=422, detail=f"grammar invalid: {violations[0]}")
        try:
            template = sample_template(grammar, req.seed)
        except GrammarError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        chunks: list[str] = []
        fields: list[str] = []
        for part in template.parts:
            if isinstance(part, Placeholder):
                chunks.append("{%s:%s}" % (part.field.value, part.placeholder_id))
                fields.append(part.field.value)
            else:
                chunks.append(part.decode("latin-1"))
        return models.GrammarSampleResponse(
            preview="".join(chunks), placeholder_count=len(fields), fields=fields
        )

    # -- stubs ----------------------------------------------------------------

    @app.post("/stubs/phase1", response_model=models.StubInfo)
    def stub_phase1(req: models.StubPhase1Request) -> models.StubInfo:
        root = Path(req.campaign_dir)
        if (root / CampaignStore.MANIFEST).exists():
            store = CampaignStore.open(root)
        else:
            store = CampaignStore.create(
                root,
                req.campaign_id,
                req.master_seed,
                rng_algorithm=RNG_ALGORITHM,
                grammar_ref=req.grammar_ref,
            )
        if req.grammar_ref == "builtin":
            grammar = builtin_grammar()
        else:
            grammar = _load_grammar(Path(req.grammar_ref).read_text(encoding="utf-8"))
        try:
            server = serve(req.bind, Phase1Mode(grammar, req.master_seed), store)
        except BindFailure as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        stub_id = registry.add("phase1", server)
        return models.StubInfo(
            stub_id=stub_id, mode="phase1", host=server.host, port=server.port, url=server.url
        )

    @app.post("/stubs/phase2", response_model=models.StubInfo)
    def stub_phase2(req: models.StubPhase2Request) -> models.StubInfo:
        store = _open_store(req.campaign_dir)
        try:
            payload = payload_by_id(req.payload_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        mode = Phase2Mode(req.response_id, req.token, payload.payload_id, payload.text)
        try:
            server = serve(req.bind, mode, store)
        except BindFailure as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except LedgerError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        stub_id = registry.add("phase2", server)
        return models.StubInfo(
            stub_id=stub_id, mode="phase2", host=server.host, port=server.port, url=server.url
        )

    @app.get("/stubs", response_model=models.StubListResponse)
    def stub_list() -> models.StubListResponse:
        return models.StubListResponse(
            stubs=[
                models.StubInfo(
                    stub_id=stub_id, mode=mode, host=server.host, port=server.port, url=server.url
                )
                for stub_id, (mode, server) in sorted(registry.items().items())
            ]
        )

    @app.delete("/stubs/{stub_id}")
    def stub_stop(stub_id: str) -> dict:
        entry = registry.remove(stub_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"no stub {stub_id!r}")
        entry[1].stop()
        return {"stopped": stub_id}

    # -- campaigns ---------------------------------------------------------

    @app.post("/campaigns/phase1", response_model=models.Phase1Response)
    def campaigns_phase1(req: models.Phase1Request) -> models.Phase1Response:
        try:
            summary = run_phase1(req.config, notice=req.notice)
        except (StubStartFailure, GrammarError, LedgerError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return models.Phase1Response(**summary.to_dict())

    @app.post("/campaigns/phase2", response_model=models.Phase2Response)
    def campaigns_phase2(req: models.Phase2Request) -> models.Phase2Response:
        try:
            summary = run_phase2(req.config, notice=req.notice)
        except (StubStartFailure, GrammarError, LedgerError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return models.Phase2Response(**summary.to_dict())

    @app.post("/campaigns/analyze", response_model=models.AnalyzeResponse)
    def campaigns_analyze(req: models.CampaignDirRequest) -> models.AnalyzeResponse:
        store = _open_store(req.campaign_dir)
        result = analyze_campaign(store)
        return models.AnalyzeResponse(
            rows=[
                models.SummaryRowModel(name=n, tainted=t, vulnerable=v)
                for n, t, v in result["rows"]
            ],
            table=result["table"],
            files=result["files"],
        )

    @app.post("/campaigns/audit", response_model=models.AuditResponse)
    def campaigns_audit(req: models.CampaignDirRequest) -> models.AuditResponse:
        store = _open_store(req.campaign_dir)
        report = store.audit()
        return models.AuditResponse(
            ok=report.ok,
            records_checked=report.records_checked,
            issues=[models.AuditIssueModel(kind=i.kind, detail=i.detail) for i in report.issues],
        )

    @app.post("/campaigns/summary", response_model=models.SummaryResponse)
    def campaigns_summary(req: models.CampaignDirRequest) -> models.SummaryResponse:
        store = _open_store(req.campaign_dir)
        from ..analyzer import scanner_field_map, summary_rows

        table, exit_code = summarize(store)
        rows = summary_rows(scanner_field_map(store))
        return models.SummaryResponse(
            table=table,
            exit_code=exit_code,
            rows=[
                models.SummaryRowModel(name=r.name, tainted=r.tainted, vulnerable=r.vulnerable)
                for r in rows
            ],
        )

    return app


app = create_app()
