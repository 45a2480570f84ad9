"""Request and response schemas of the control-plane API."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from ..orchestrator import CampaignConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class PayloadModel(BaseModel):
    payload_id: str
    text: str
    length: int
    contexts: list[str]
    variant_of: Optional[str] = None
    hazards: list[str] = Field(default_factory=list)


class PayloadListResponse(BaseModel):
    payloads: list[PayloadModel]


class GrammarValidateRequest(BaseModel):
    grammar_text: Optional[str] = None  # omitted: validate the builtin grammar


class ViolationModel(BaseModel):
    kind: str
    nonterminal: str
    detail: str
    amount: Optional[float] = None


class GrammarValidateResponse(BaseModel):
    violations: list[ViolationModel]


class GrammarExportResponse(BaseModel):
    grammar_text: str


class GrammarSampleRequest(BaseModel):
    seed: int
    grammar_text: Optional[str] = None


class GrammarSampleResponse(BaseModel):
    preview: str  # placeholders shown as {field:placeholder_id}
    placeholder_count: int
    fields: list[str]


class StubPhase1Request(BaseModel):
    campaign_dir: str
    campaign_id: str = "adhoc"
    master_seed: int = 0
    bind: str = "127.0.0.1:0"
    grammar_ref: str = "builtin"


class StubPhase2Request(BaseModel):
    campaign_dir: str
    response_id: str
    token: str
    payload_id: str
    bind: str = "127.0.0.1:0"


class StubInfo(BaseModel):
    stub_id: str
    mode: str
    host: str
    port: int
    url: str


class StubListResponse(BaseModel):
    stubs: list[StubInfo]


class Phase1Request(BaseModel):
    config: CampaignConfig
    notice: bool = True


class AdapterErrorModel(BaseModel):
    adapter: str
    round: int
    error: str


class Phase1Response(BaseModel):
    campaign_id: str
    flows: int
    fields_by_adapter: dict[str, list[str]]
    rounds_by_adapter: dict[str, int]
    errors: list[AdapterErrorModel]


class Phase2Request(BaseModel):
    config: CampaignConfig
    notice: bool = True


class TrialModel(BaseModel):
    adapter: str
    source_field: str
    payload_id: str
    artifact_id: str
    confirmed: bool
    reason: Optional[str] = None


class Phase2Response(BaseModel):
    campaign_id: str
    vulns: int
    trials: list[TrialModel]
    errors: list[AdapterErrorModel]


class CampaignDirRequest(BaseModel):
    campaign_dir: str


class SummaryRowModel(BaseModel):
    name: str
    tainted: int
    vulnerable: int


class AnalyzeResponse(BaseModel):
    rows: list[SummaryRowModel]
    table: str
    files: dict[str, str]


class AuditIssueModel(BaseModel):
    kind: str
    detail: str


class AuditResponse(BaseModel):
    ok: bool
    records_checked: int
    issues: list[AuditIssueModel]


class SummaryResponse(BaseModel):
    table: str
    exit_code: int
    rows: list[SummaryRowModel]
