"""Probabilistic context-free grammar for HTTP response templates.

A grammar is a set of weighted productions.  For every nonterminal the
probabilities of its productions must form a distribution (sum to 1); a
deficit left by the listed productions is absorbed by an implicit
epsilon production added when a grammar file is loaded.

Grammar text format (one record per line, ``#`` starts a comment):

    start Resp                  directive: start symbol
    field Serv Server           directive: variables derived under the
                                nonterminal belong to this response field
    Vers 0.5 "HTTP/1.0"         production: lhs, probability, rhs symbols

Probabilities are decimals or rationals (``0.475``, ``1/3``).  Rhs symbols
are double-quoted terminals (``\\"`` and ``\\\\`` escapes), bare nonterminal
names, ``$t`` for a fresh variable, or ``$nat(lo,hi)`` for a random
positive integer.  A production with no rhs symbols derives the empty
string.

Terminals carry their own spacing (e.g. ``"Server: "``) and never contain
CR or LF; line structure is added when a template is assembled.  Sampling
relies on a structural convention: the start symbol has one production
with exactly four nonterminals (version, status, header list, body), and
every production of the header-list nonterminal expands to nonterminals,
each deriving one header line.  Extend the header set by adding a
nonterminal to the header list and giving it productions plus a ``field``
directive.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

from .fields import FieldId

TERMINAL = "terminal"
NONTERMINAL = "nonterminal"
VARIABLE = "variable"
NUMERIC = "numeric"

DEFAULT_NUMERIC_RANGE = (1, 31536000)  # one year of seconds, for max-age
DEFAULT_MAX_EXPANSIONS = 10_000

PROBABILITY_TOLERANCE = 1e-9

# Sampling uses the stdlib Mersenne Twister; the identifier is persisted in
# campaign manifests so recorded seeds stay reproducible across machines.
RNG_ALGORITHM = "mt19937-python-random"


class GrammarError(ValueError):
    """Raised for structurally unusable grammars or grammar files."""


class DepthExceeded(GrammarError):
    """Derivation exceeded the expansion cap; the grammar is mis-specified."""


@dataclass(frozen=True)
class SymbolRef:
    """One symbol in a production right-hand side."""

    kind: str
    value: object = None

    def __post_init__(self) -> None:
        if self.kind == TERMINAL:
            text = self.value
            if not isinstance(text, str):
                raise GrammarError("terminal value must be a string")
            if "\r" in text or "\n" in text:
                raise GrammarError("terminal values must not contain CR or LF")
        elif self.kind == NONTERMINAL:
            if not self.value:
                raise GrammarError("nonterminal reference needs a name")
        elif self.kind == NUMERIC:
            lo, hi = self.value
            if lo < 1 or hi < lo:
                raise GrammarError("numeric domain must satisfy 1 <= lo <= hi")
        elif self.kind != VARIABLE:
            raise GrammarError(f"unknown symbol kind {self.kind!r}")

    @classmethod
    def terminal(cls, text: str) -> "SymbolRef":
        return cls(TERMINAL, text)

    @classmethod
    def nonterminal(cls, name: str) -> "SymbolRef":
        return cls(NONTERMINAL, name)

    @classmethod
    def variable(cls) -> "SymbolRef":
        return cls(VARIABLE)

    @classmethod
    def numeric(cls, lo: int = DEFAULT_NUMERIC_RANGE[0], hi: int = DEFAULT_NUMERIC_RANGE[1]) -> "SymbolRef":
        return cls(NUMERIC, (lo, hi))


@dataclass(frozen=True)
class Production:
    lhs: str
    rhs: tuple[SymbolRef, ...]
    probability: Fraction

    def __post_init__(self) -> None:
        p = self.probability
        if not isinstance(p, Fraction):
            object.__setattr__(self, "probability", Fraction(p))
            p = self.probability
        if not 0 < p <= 1:
            raise GrammarError(f"production probability must be in (0, 1], got {p}")

    @property
    def is_epsilon(self) -> bool:
        return not self.rhs


@dataclass(frozen=True)
class Pcfg:
    nonterminals: frozenset[str]
    productions: tuple[Production, ...]
    start: str
    # Nonterminal -> FieldId owning any variables derived beneath it.
    field_owners: dict[str, FieldId] = field(default_factory=dict)
    source_text: str | None = field(default=None, compare=False)

    def by_lhs(self, name: str) -> list[Production]:
        return [p for p in self.productions if p.lhs == name]


@dataclass(frozen=True)
class Violation:
    """One broken grammar rule; validation returns these instead of raising."""

    kind: str
    nonterminal: str
    detail: str
    amount: float | None = None


DISTRIBUTION_DEFICIT = "distribution-deficit"
DISTRIBUTION_EXCESS = "distribution-excess"
UNDEFINED_NONTERMINAL = "undefined-nonterminal"
NON_TERMINATING = "non-terminating"
BAD_STRUCTURE = "bad-structure"


@dataclass(frozen=True)
class Placeholder:
    """A variable slot in a template, tagged with the field it sits in."""

    placeholder_id: str
    field: FieldId


Part = Union[bytes, Placeholder]

_CRLF = b"\r\n"


@dataclass(frozen=True)
class ResponseTemplate:
    """A sampled HTTP response with placeholder slots still open.

    Structure is kept (status line, one entry per header line, body) so the
    renderer can frame the message; ``parts`` flattens it to the ordered
    fragment sequence including line separators.
    """

    status_parts: tuple[Part, ...]
    header_lines: tuple[tuple[Part, ...], ...]
    body_parts: tuple[Part, ...]
    seed: int

    @property
    def parts(self) -> tuple[Part, ...]:
        flat: list[Part] = list(self.status_parts)
        flat.append(_CRLF)
        for line in self.header_lines:
            flat.extend(line)
            flat.append(_CRLF)
        flat.append(_CRLF)
        flat.extend(self.body_parts)
        return tuple(flat)

    def placeholders(self) -> Iterator[Placeholder]:
        for part in self.parts:
            if isinstance(part, Placeholder):
                yield part


# ---------------------------------------------------------------------------
# Builtin grammar
#
# Probabilities follow published frequency measurements of real-world
# response headers; uniform weights are used where no measurement exists.
# Sub-grammars marked "synthetic" have no measured source: they mirror the
# 0.5 header-with-variable pattern of the measured single-variable headers.
# ---------------------------------------------------------------------------

BUILTIN_GRAMMAR_TEXT = """\
# HTTP response template grammar.
# Listed probabilities below 1 per nonterminal are closed by an implicit
# epsilon production at load time.

start Resp

field Succ StatusMessage
field Redr StatusMessage
field ClEr StatusMessage
field SvEr StatusMessage
field Serv Server
field PwBy XPoweredBy
field Locn Location
field SetC SetCookie
field CntT XContentTypeOptions
field AspV XAspNetVersion
field MvcV XAspNetMvcVersion
field Varn XVarnish
field StTS StrictTransportSecurity
field CnSP ContentSecurityPolicy
field XSSP XXssProtection
field FrOp XFrameOptions
field Body Body

Resp 1 Vers Stat Head Body

Vers 0.5 "HTTP/1.0"
Vers 0.5 "HTTP/1.1"

Stat 0.554 Succ
Stat 0.427 Redr
Stat 0.013 ClEr
Stat 0.006 SvEr

Succ 0.5 "200 OK"
Succ 0.5 "200 " $t
Redr 0.386 "301 Moved Permanently"
Redr 0.386 "301 " $t
Redr 0.114 "302 Found"
Redr 0.114 "302 " $t
ClEr 0.26 "403 Forbidden"
ClEr 0.26 "403 " $t
ClEr 0.24 "404 Not Found"
ClEr 0.24 "404 " $t
SvEr 0.5 "500 Internal Server Error"
SvEr 0.5 "500 " $t

Head 1 Serv PwBy Locn SetC CntT AspV MvcV Varn StTS CnSP XSSP FrOp

Serv 0.475 "Server: " $t
Serv 0.475 "Server: " SrvT $t

# synthetic: common server product prefixes, uniform
SrvT 1/3 "nginx/"
SrvT 1/3 "Apache/"
SrvT 1/3 "Microsoft-IIS/"

PwBy 0.24 "X-Powered-By: php"
PwBy 0.24 "X-Powered-By: " $t

Locn 0.315 "Location: " Link
Locn 0.315 "Location: " $t

Link 0.516 "https://" $t
Link 0.167 "http://" $t ":8899"
Link 0.135 "http://" $t ":8090"
Link 0.065 "http://" $t "/login.lp"
Link 0.059 "/nocookies.html"
Link 0.058 "cookiechecker?uri=/"

SetC 0.175 "Set-Cookie: " Ckie

Ckie 0.471 "__cfduid=" $t
Ckie 0.394 "PHPSESSID=" $t
Ckie 0.087 "ASP.NET Session=" $t
Ckie 0.048 "JSESSIONID=" $t

CntT 0.07 "X-Content-Type-Options: nosniff"
CntT 0.07 "X-Content-Type-Options: " $t

AspV 0.5 "X-AspNet-Version: " $t
MvcV 0.5 "X-AspNetMvc-Version: " $t
Varn 0.5 "X-Varnish: " $t

StTS 0.5 "Strict-Transport-Security: " STSA

STSA 0.111 "max-age=" $nat(1,31536000)
STSA 0.111 "max-age=" $t
STSA 0.111 "max-age=" $nat(1,31536000) "; preload"
STSA 0.111 "max-age=" $t "; preload"

# synthetic: headers the measurements leave open, 0.5 with-variable each
CnSP 0.5 "Content-Security-Policy: " $t
XSSP 0.5 "X-XSS-Protection: " $t
FrOp 0.5 "X-Frame-Options: " $t

# synthetic: body carries a variable half of the time
Body 0.5 $t
"""


# ---------------------------------------------------------------------------
# Grammar file parsing and serialization
# ---------------------------------------------------------------------------


def _tokenize_rhs(text: str, lineno: int) -> list[str]:
    tokens: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c == '"':
            j = i + 1
            buf = ['"']
            while j < n:
                if text[j] == "\\" and j + 1 < n:
                    buf.append(text[j : j + 2])
                    j += 2
                    continue
                buf.append(text[j])
                if text[j] == '"':
                    break
                j += 1
            else:
                raise GrammarError(f"line {lineno}: unterminated terminal literal")
            tokens.append("".join(buf))
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace():
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _parse_symbol(token: str, lineno: int) -> SymbolRef:
    if token.startswith('"'):
        body = token[1:-1]
        text = body.replace('\\"', '"').replace("\\\\", "\\")
        return SymbolRef.terminal(text)
    if token == "$t":
        return SymbolRef.variable()
    if token == "$nat":
        return SymbolRef.numeric()
    if token.startswith("$nat(") and token.endswith(")"):
        lo_text, _, hi_text = token[5:-1].partition(",")
        try:
            return SymbolRef.numeric(int(lo_text), int(hi_text))
        except ValueError as exc:
            raise GrammarError(f"line {lineno}: bad numeric domain {token!r}") from exc
    if token.startswith("$"):
        raise GrammarError(f"line {lineno}: unknown symbol {token!r}")
    return SymbolRef.nonterminal(token)


def parse_grammar(text: str) -> Pcfg:
    """Load a grammar from its text format, closing each distribution."""

    start: str | None = None
    field_owners: dict[str, FieldId] = {}
    productions: list[Production] = []

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        if raw_line.lstrip().startswith("#"):
            continue
        # '#' inside a quoted terminal must survive; strip only trailing
        # comments outside quotes.
        line = _strip_trailing_comment(raw_line).strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if head == "start":
            start = rest.strip()
            continue
        if head == "field":
            nt_name, _, field_name = rest.strip().partition(" ")
            try:
                field_owners[nt_name] = FieldId(field_name.strip())
            except ValueError as exc:
                raise GrammarError(f"line {lineno}: unknown field {field_name!r}") from exc
            continue
        prob_text, _, rhs_text = rest.strip().partition(" ")
        try:
            probability = Fraction(prob_text)
        except (ValueError, ZeroDivisionError) as exc:
            raise GrammarError(f"line {lineno}: bad probability {prob_text!r}") from exc
        rhs = tuple(_parse_symbol(tok, lineno) for tok in _tokenize_rhs(rhs_text, lineno))
        productions.append(Production(head, rhs, probability))

    if start is None:
        raise GrammarError("grammar has no start directive")
    if not productions:
        raise GrammarError("grammar has no productions")

    productions = _epsilon_closed(productions)
    nonterminals = frozenset(p.lhs for p in productions)
    return Pcfg(nonterminals, tuple(productions), start, field_owners, source_text=text)


def _strip_trailing_comment(line: str) -> str:
    in_quote = False
    i = 0
    while i < len(line):
        c = line[i]
        if c == "\\" and in_quote:
            i += 2
            continue
        if c == '"':
            in_quote = not in_quote
        elif c == "#" and not in_quote:
            return line[:i]
        i += 1
    return line


def _epsilon_closed(productions: list[Production]) -> list[Production]:
    totals: dict[str, Fraction] = {}
    for p in productions:
        totals[p.lhs] = totals.get(p.lhs, Fraction(0)) + p.probability
    closed = list(productions)
    for lhs, total in totals.items():
        deficit = Fraction(1) - total
        if deficit > 0:
            closed.append(Production(lhs, (), deficit))
    return closed


def _format_symbol(sym: SymbolRef) -> str:
    if sym.kind == TERMINAL:
        text = str(sym.value).replace("\\", "\\\\").replace('"', '\\"')
        return f'"{text}"'
    if sym.kind == VARIABLE:
        return "$t"
    if sym.kind == NUMERIC:
        lo, hi = sym.value
        return f"$nat({lo},{hi})"
    return str(sym.value)


def serialize_grammar(grammar: Pcfg) -> str:
    """Render a grammar to the text format.

    Grammars loaded from text serialize back to their source bytes; grammars
    built programmatically get a canonical emission with explicit epsilon
    productions.
    """

    if grammar.source_text is not None:
        return grammar.source_text
    lines = [f"start {grammar.start}", ""]
    for nt_name, field_id in sorted(grammar.field_owners.items()):
        lines.append(f"field {nt_name} {field_id.value}")
    if grammar.field_owners:
        lines.append("")
    for p in grammar.productions:
        rhs = " ".join(_format_symbol(s) for s in p.rhs)
        lines.append(f"{p.lhs} {p.probability}" + (f" {rhs}" if rhs else ""))
    return "\n".join(lines) + "\n"


_builtin: Pcfg | None = None


def builtin_grammar() -> Pcfg:
    """The embedded response-template grammar."""

    global _builtin
    if _builtin is None:
        _builtin = parse_grammar(BUILTIN_GRAMMAR_TEXT)
    return _builtin


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(grammar: Pcfg) -> list[Violation]:
    """Check distribution closure, reference integrity and termination.

    Violations are data; an empty list means the grammar is usable for
    sampling.
    """

    violations: list[Violation] = []
    by_lhs: dict[str, list[Production]] = {}
    for p in grammar.productions:
        by_lhs.setdefault(p.lhs, []).append(p)

    for lhs in sorted(by_lhs):
        total = sum((p.probability for p in by_lhs[lhs]), Fraction(0))
        delta = float(total - 1)
        if delta < -PROBABILITY_TOLERANCE:
            violations.append(
                Violation(DISTRIBUTION_DEFICIT, lhs, f"probabilities sum to {float(total):g}", -delta)
            )
        elif delta > PROBABILITY_TOLERANCE:
            violations.append(
                Violation(DISTRIBUTION_EXCESS, lhs, f"probabilities sum to {float(total):g}", delta)
            )

    defined = set(by_lhs)
    referenced: set[str] = {grammar.start}
    for p in grammar.productions:
        for sym in p.rhs:
            if sym.kind == NONTERMINAL:
                referenced.add(str(sym.value))
    for name in sorted(referenced - defined):
        violations.append(Violation(UNDEFINED_NONTERMINAL, name, "referenced but never defined"))

    violations.extend(_check_generating(by_lhs, defined))
    violations.extend(_check_structure(grammar, by_lhs))
    return violations


def _check_generating(by_lhs: dict[str, list[Production]], defined: set[str]) -> list[Violation]:
    # A nonterminal terminates with probability 1 only if some production
    # bottoms out; anything that can never derive a finite string (e.g. a
    # probability-1 self loop) is flagged.
    generating: set[str] = set()
    changed = True
    while changed:
        changed = False
        for lhs, prods in by_lhs.items():
            if lhs in generating:
                continue
            for p in prods:
                nts = [str(s.value) for s in p.rhs if s.kind == NONTERMINAL]
                if all(nt in generating or nt not in defined for nt in nts):
                    generating.add(lhs)
                    changed = True
                    break
    return [
        Violation(NON_TERMINATING, lhs, "cannot derive a finite string")
        for lhs in sorted(set(by_lhs) - generating)
    ]


def _check_structure(grammar: Pcfg, by_lhs: dict[str, list[Production]]) -> list[Violation]:
    # Template assembly needs the version/status/headers/body shape.
    starts = by_lhs.get(grammar.start, [])
    if len(starts) != 1:
        return [Violation(BAD_STRUCTURE, grammar.start, "start symbol needs exactly one production")]
    rhs = starts[0].rhs
    if len(rhs) != 4 or any(s.kind != NONTERMINAL for s in rhs):
        return [
            Violation(
                BAD_STRUCTURE,
                grammar.start,
                "start production must be four nonterminals: version status headers body",
            )
        ]
    head_name = str(rhs[2].value)
    for p in by_lhs.get(head_name, []):
        if any(s.kind != NONTERMINAL for s in p.rhs):
            return [
                Violation(BAD_STRUCTURE, head_name, "header list productions must expand to nonterminals")
            ]
    return []


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


class _Sampler:
    def __init__(self, grammar: Pcfg, rng: random.Random, max_expansions: int):
        self.grammar = grammar
        self.rng = rng
        self.remaining = max_expansions
        self.by_lhs: dict[str, list[Production]] = {}
        self.weights: dict[str, list[float]] = {}
        for p in grammar.productions:
            self.by_lhs.setdefault(p.lhs, []).append(p)
        for lhs, prods in self.by_lhs.items():
            self.weights[lhs] = [float(p.probability) for p in prods]
        self.counter = 0

    def pick(self, name: str) -> Production:
        if self.remaining <= 0:
            raise DepthExceeded(f"derivation exceeded the expansion cap at {name!r}")
        self.remaining -= 1
        prods = self.by_lhs[name]
        if len(prods) == 1:
            return prods[0]
        return self.rng.choices(prods, weights=self.weights[name])[0]

    def fresh_placeholder(self, field_id: FieldId) -> Placeholder:
        self.counter += 1
        return Placeholder(f"t{self.counter}", field_id)

    def derive(self, name: str, field_id: FieldId | None) -> list[Part]:
        field_id = self.grammar.field_owners.get(name, field_id)
        production = self.pick(name)
        parts: list[Part] = []
        for sym in production.rhs:
            if sym.kind == TERMINAL:
                parts.append(str(sym.value).encode("latin-1"))
            elif sym.kind == VARIABLE:
                if field_id is None:
                    raise GrammarError(
                        f"variable under {name!r} has no field tag; add a field directive"
                    )
                parts.append(self.fresh_placeholder(field_id))
            elif sym.kind == NUMERIC:
                lo, hi = sym.value
                parts.append(str(self.rng.randint(lo, hi)).encode("latin-1"))
            else:
                parts.extend(self.derive(str(sym.value), field_id))
        return parts


def _merge_literals(parts: list[Part]) -> tuple[Part, ...]:
    merged: list[Part] = []
    for part in parts:
        if isinstance(part, bytes) and merged and isinstance(merged[-1], bytes):
            merged[-1] = merged[-1] + part
        else:
            merged.append(part)
    return tuple(merged)


def sample_template(
    grammar: Pcfg, seed: int, max_expansions: int = DEFAULT_MAX_EXPANSIONS
) -> ResponseTemplate:
    """Draw one response template; deterministic for a fixed seed.

    Leftmost derivation from the start symbol.  Every variable becomes a
    fresh placeholder tagged with the field of its enclosing rule; empty
    header derivations produce no line.
    """

    rng = random.Random(seed)
    sampler = _Sampler(grammar, rng, max_expansions)

    start_rhs = sampler.by_lhs[grammar.start][0].rhs
    version_nt, status_nt, head_nt, body_nt = (str(s.value) for s in start_rhs)
    sampler.remaining -= 1  # the start production itself

    version = sampler.derive(version_nt, None)
    status = sampler.derive(status_nt, None)
    status_parts = _merge_literals(version + [b" "] + status)

    head_production = sampler.pick(head_nt)
    header_lines = []
    for sym in head_production.rhs:
        line = sampler.derive(str(sym.value), None)
        if line:
            header_lines.append(_merge_literals(line))

    body_parts = _merge_literals(sampler.derive(body_nt, None))
    return ResponseTemplate(status_parts, tuple(header_lines), body_parts, seed)
