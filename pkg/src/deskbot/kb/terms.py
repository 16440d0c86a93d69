"""Term model for the triple store.

Terms are IRIs, literals, or (query-only) variables. CURIEs such as
``mario:Person`` expand against a prefix map at parse time; the store only
ever holds absolute IRIs. Literals come in five kinds: string, integer,
decimal, boolean, and time-of-day ("HH:MM").
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Dict, Optional, Tuple, Union

from deskbot.errors import IllFormedTriple, ParseError, UnboundPrefix

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDFS_SUBCLASS = "http://www.w3.org/2000/01/rdf-schema#subClassOf"
RDFS_SUBPROP = "http://www.w3.org/2000/01/rdf-schema#subPropertyOf"
RDFS_DOMAIN = "http://www.w3.org/2000/01/rdf-schema#domain"
RDFS_RANGE = "http://www.w3.org/2000/01/rdf-schema#range"

DEFAULT_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
    "mario": "http://example.org/mario#",
}

_TIME_RE = re.compile(r"^\d{2}:\d{2}$")
_INT_RE = re.compile(r"^[+-]?\d+$")
_DEC_RE = re.compile(r"^[+-]?\d+\.\d+$")


class LiteralKind(Enum):
    STRING = "string"
    INTEGER = "integer"
    DECIMAL = "decimal"
    BOOLEAN = "boolean"
    TIME = "time"


@dataclass(frozen=True)
class Iri:
    value: str

    def __post_init__(self):
        if not self.value:
            raise IllFormedTriple("empty IRI")

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Literal:
    kind: LiteralKind
    value: Union[str, int, Decimal, bool]

    def __str__(self):
        return f"{self.value}"


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self):
        return f"?{self.name}"


Term = Union[Iri, Literal]
PatternTerm = Union[Iri, Literal, Variable]


@dataclass(frozen=True)
class Triple:
    s: Iri
    p: Iri
    o: Term

    def __post_init__(self):
        if not isinstance(self.s, Iri) or not isinstance(self.p, Iri):
            raise IllFormedTriple("subject and predicate must be IRIs")
        if not isinstance(self.o, (Iri, Literal)):
            raise IllFormedTriple("object must be an IRI or literal")


@dataclass(frozen=True)
class Pattern:
    s: PatternTerm
    p: PatternTerm
    o: PatternTerm

    def variables(self) -> Tuple[str, ...]:
        return tuple(t.name for t in (self.s, self.p, self.o)
                     if isinstance(t, Variable))


class PrefixMap:
    """CURIE prefix registrations, seeded with the runtime defaults."""

    def __init__(self, extra: Optional[Dict[str, str]] = None):
        self._prefixes = dict(DEFAULT_PREFIXES)
        if extra:
            self._prefixes.update(extra)

    def register(self, prefix: str, namespace: str) -> None:
        self._prefixes[prefix] = namespace

    def expand(self, curie_or_iri: str) -> str:
        if curie_or_iri.startswith("<") and curie_or_iri.endswith(">"):
            return curie_or_iri[1:-1]
        if "://" in curie_or_iri:
            return curie_or_iri
        prefix, sep, local = curie_or_iri.partition(":")
        if not sep:
            raise UnboundPrefix(f"not an IRI or CURIE: {curie_or_iri!r}")
        ns = self._prefixes.get(prefix)
        if ns is None:
            raise UnboundPrefix(f"prefix {prefix!r} not registered")
        return ns + local

    def compact(self, iri: str) -> str:
        best = None
        for prefix, ns in self._prefixes.items():
            if iri.startswith(ns) and (best is None or len(ns) > len(best[1])):
                best = (prefix, ns)
        if best is None:
            return f"<{iri}>"
        return f"{best[0]}:{iri[len(best[1]):]}"

    def as_dict(self) -> Dict[str, str]:
        return dict(self._prefixes)


def parse_term(token: str, prefixes: PrefixMap) -> PatternTerm:
    """Parse one term token: variable, IRI/CURIE, or literal.

    Literal forms: "text" (string), "12:30"^^time, 42, 3.14, true/false.
    """
    token = token.strip()
    if not token:
        raise ParseError("empty term")
    if token.startswith("?"):
        name = token[1:]
        if not name:
            raise ParseError("variable needs a name")
        return Variable(name)
    if token.startswith('"'):
        body, suffix = _split_quoted(token)
        if suffix == "^^time":
            if not _TIME_RE.match(body):
                raise ParseError(f"bad time literal {body!r}")
            return Literal(LiteralKind.TIME, body)
        if suffix:
            raise ParseError(f"unknown literal suffix {suffix!r}")
        return Literal(LiteralKind.STRING, body)
    if token in ("true", "false"):
        return Literal(LiteralKind.BOOLEAN, token == "true")
    if _INT_RE.match(token):
        return Literal(LiteralKind.INTEGER, int(token))
    if _DEC_RE.match(token):
        try:
            return Literal(LiteralKind.DECIMAL, Decimal(token))
        except InvalidOperation:
            raise ParseError(f"bad decimal {token!r}") from None
    return Iri(prefixes.expand(token))


def _split_quoted(token: str) -> Tuple[str, str]:
    out = []
    i = 1
    while i < len(token):
        ch = token[i]
        if ch == "\\":
            if i + 1 >= len(token):
                raise ParseError(f"dangling escape in {token!r}")
            nxt = token[i + 1]
            out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(nxt, nxt))
            i += 2
            continue
        if ch == '"':
            return "".join(out), token[i + 1:]
        out.append(ch)
        i += 1
    raise ParseError(f"unterminated string in {token!r}")


def format_term(term: PatternTerm, prefixes: Optional[PrefixMap] = None) -> str:
    """Canonical text form, the inverse of parse_term."""
    if isinstance(term, Variable):
        return f"?{term.name}"
    if isinstance(term, Iri):
        return prefixes.compact(term.value) if prefixes else f"<{term.value}>"
    if term.kind == LiteralKind.STRING:
        escaped = term.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if term.kind == LiteralKind.TIME:
        return f'"{term.value}"^^time'
    if term.kind == LiteralKind.BOOLEAN:
        return "true" if term.value else "false"
    return str(term.value)


def term_key(term: Term) -> Tuple:
    """Total order over terms: IRIs first (by value), then literals by
    (kind, canonical string). Used for deterministic result ordering."""
    if isinstance(term, Iri):
        return (0, term.value)
    return (1, term.kind.value, str(term.value))


def literal_from_python(value) -> Literal:
    """Map a plain Python value onto a literal; strings stay strings
    (time-of-day must be requested explicitly via a time-kinded range)."""
    if isinstance(value, bool):
        return Literal(LiteralKind.BOOLEAN, value)
    if isinstance(value, int):
        return Literal(LiteralKind.INTEGER, value)
    if isinstance(value, float):
        return Literal(LiteralKind.DECIMAL, Decimal(str(value)))
    if isinstance(value, Decimal):
        return Literal(LiteralKind.DECIMAL, value)
    if isinstance(value, str):
        return Literal(LiteralKind.STRING, value)
    raise IllFormedTriple(f"no literal mapping for {type(value).__name__}")


def literal_to_python(lit: Literal):
    if lit.kind == LiteralKind.DECIMAL:
        return float(lit.value)
    return lit.value
