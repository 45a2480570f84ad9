"""Bundled mock scanning systems with designed taint topologies.

Each mock performs one GET against the target, extracts a fixed set of
response fields, pushes every value through a per-field sanitizer and
renders a deterministic HTML report.  The sanitizers reproduce behavior
classes seen in real report generators:

    none          the value is embedded verbatim
    html-escape   markup survives only entity-escaped
    url-encode    a partial encoder that turns U+0020 into %20 and leaves
                  markup characters alone (the behavior class that makes
                  the non-breaking-space payload variant necessary)
    truncate(N)   the value is cut to N characters

The ``urlenc`` mock additionally normalizes values for display (NFKC),
the way report pipelines commonly fold compatibility characters; this
turns surviving non-breaking spaces back into working separators.  The
``truncating`` mock dumps its value into an attribute of the report's
final, unterminated element: a dynamic report cut off mid-write.  Its cut
of 36 characters is exactly token-sized, so phase 1 flows survive while
every longer payload loses its closing bracket at end of file.

The designed (T, V) topology of each mock is declared next to it and is
the ground truth the end-to-end fixtures assert against.
"""

from __future__ import annotations

import html
import http.client
import re
import time
import unicodedata
from dataclasses import dataclass, field
from urllib.parse import urlparse

from .fields import HEADER_NAMES, FieldId

SINK_TEXT_CELL = "text-cell"
SINK_ATTR_UNTERMINATED = "attr-unterminated"

_TRUNCATE_RE = re.compile(r"^truncate\((\d+)\)$")


class TargetUnreachable(Exception):
    pass


@dataclass(frozen=True)
class MockSpec:
    name: str
    reflected_fields: tuple[FieldId, ...]
    sanitizers: dict[FieldId, str] = field(default_factory=dict)
    sink: str = SINK_TEXT_CELL
    normalize_display: bool = False

    def __post_init__(self) -> None:
        if not self.reflected_fields:
            raise ValueError("a mock must reflect at least one field")
        for sanitizer in self.sanitizers.values():
            _sanitize_fn(sanitizer)  # validates the spec string
        if self.sink == SINK_ATTR_UNTERMINATED and len(self.reflected_fields) != 1:
            raise ValueError("the unterminated-attribute sink dumps exactly one field")

    def sanitizer_for(self, field_id: FieldId) -> str:
        return self.sanitizers.get(field_id, "none")


def _sanitize_fn(spec: str):
    if spec == "none":
        return lambda value: value
    if spec == "html-escape":
        return lambda value: html.escape(value, quote=True)
    if spec == "url-encode":
        # Partial encoder: whitespace becomes %20, markup passes through.
        return lambda value: value.replace(" ", "%20")
    match = _TRUNCATE_RE.match(spec)
    if match:
        limit = int(match.group(1))
        if limit < 1:
            raise ValueError("truncate length must be >= 1")
        return lambda value: value[:limit]
    raise ValueError(f"unknown sanitizer {spec!r}")


def fetch_fields(target_url: str, timeout: float = 10.0) -> dict[FieldId, str]:
    """One GET against the target; extract every field the response carries.

    Redirects are never followed: the Location header is data here, not
    navigation.
    """

    parsed = urlparse(target_url)
    host = parsed.hostname or "127.0.0.1"
    port = parsed.port or 80
    conn = http.client.HTTPConnection(host, port, timeout=timeout)
    try:
        conn.request("GET", parsed.path or "/")
        resp = conn.getresponse()
        body = resp.read()
    except OSError as exc:
        raise TargetUnreachable(f"cannot scan {target_url}: {exc}") from exc
    finally:
        conn.close()

    values: dict[FieldId, str] = {}
    if resp.reason:
        values[FieldId.STATUS_MESSAGE] = resp.reason
    for field_id, header_name in HEADER_NAMES.items():
        raw = resp.getheader(header_name)
        if raw is not None:
            values[field_id] = raw
    if body:
        values[FieldId.BODY] = body.decode("latin-1")
    return values


def render_report(spec: MockSpec, target_url: str, values: dict[FieldId, str]) -> str:
    cooked: dict[FieldId, str] = {}
    for field_id in spec.reflected_fields:
        if field_id not in values:
            continue
        value = _sanitize_fn(spec.sanitizer_for(field_id))(values[field_id])
        if spec.normalize_display:
            value = unicodedata.normalize("NFKC", value)
        cooked[field_id] = value

    head = (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{spec.name} scan report</title></head>\n<body>\n"
        f"<h1>Scan results ({spec.name})</h1>\n"
        f"<p>Target: {html.escape(target_url)}</p>\n"
    )
    rows = ["<table>", "<tr><th>Field</th><th>Observed value</th></tr>"]
    if spec.sink == SINK_TEXT_CELL:
        for field_id in spec.reflected_fields:
            cell = cooked.get(field_id, "(absent)")
            rows.append(f"<tr><td>{field_id.value}</td><td>{cell}</td></tr>")
        rows.append("</table>")
        return head + "\n".join(rows) + "\n</body></html>\n"

    # Unterminated-attribute sink: the table lists the field, the raw value
    # lands in a trailing attribute and the file ends mid-element.
    field_id = spec.reflected_fields[0]
    rows.append(f"<tr><td>{field_id.value}</td><td>(captured)</td></tr>")
    rows.append("</table>")
    value = cooked.get(field_id, "")
    return head + "\n".join(rows) + f'\n<div id="raw-capture" data-value="{value}'


def run_mock(spec: MockSpec, target_url: str):
    """Scan the target once and return the rendered report artifact."""

    from .analyzer import ReportArtifact

    values = fetch_fields(target_url)
    report = render_report(spec, target_url, values)
    return ReportArtifact(
        artifact_id=f"{spec.name}-adhoc",
        scanner=spec.name,
        round=0,
        content=report.encode("utf-8"),
        fetched_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        source=target_url,
    )


# ---------------------------------------------------------------------------
# Canonical mocks and their designed topologies
# ---------------------------------------------------------------------------

ECHOING = MockSpec(
    name="echoing",
    reflected_fields=(FieldId.SERVER, FieldId.LOCATION, FieldId.BODY),
)

ESCAPING = MockSpec(
    name="escaping",
    reflected_fields=(FieldId.SERVER, FieldId.STATUS_MESSAGE, FieldId.BODY),
    sanitizers={
        FieldId.SERVER: "html-escape",
        FieldId.STATUS_MESSAGE: "html-escape",
        FieldId.BODY: "html-escape",
    },
)

URLENC = MockSpec(
    name="urlenc",
    reflected_fields=(FieldId.LOCATION,),
    sanitizers={FieldId.LOCATION: "url-encode"},
    normalize_display=True,
)

TRUNCATING = MockSpec(
    name="truncating",
    reflected_fields=(FieldId.SERVER,),
    sanitizers={FieldId.SERVER: "truncate(36)"},
    sink=SINK_ATTR_UNTERMINATED,
)

BUILTIN_MOCKS: dict[str, MockSpec] = {
    spec.name: spec for spec in (ECHOING, ESCAPING, URLENC, TRUNCATING)
}

# Ground truth for the end-to-end fixtures: fields tainted over a 10-round
# campaign and fields confirmed vulnerable, per mock.
DESIGNED_TOPOLOGY: dict[str, tuple[int, int]] = {
    "echoing": (3, 3),
    "escaping": (3, 0),
    "urlenc": (1, 1),
    "truncating": (1, 0),
}


def load_mock_spec(ref: str) -> MockSpec:
    """A bundled mock by name, or a MockSpec from a YAML file."""

    if ref in BUILTIN_MOCKS:
        return BUILTIN_MOCKS[ref]
    import yaml

    with open(ref, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return MockSpec(
        name=raw["name"],
        reflected_fields=tuple(FieldId(f) for f in raw["reflected_fields"]),
        sanitizers={FieldId(k): v for k, v in (raw.get("sanitizers") or {}).items()},
        sink=raw.get("sink", SINK_TEXT_CELL),
        normalize_display=bool(raw.get("normalize_display", False)),
    )
