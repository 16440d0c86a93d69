"""Line-oriented triple document format.

A document is a prefix header followed by one triple per line:

    @prefix mario: <http://example.org/mario#> .
    mario:user1 rdf:type mario:Person .
    mario:user1 mario:hasAge 81 .
    mario:sched1 mario:startsAt "12:30"^^time .

Lines starting with '#' are comments. The same parser serves KB load/dump,
ontology documents, and inline bundle ontologies.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

from deskbot.errors import ParseError
from deskbot.kb.terms import (
    Iri,
    PrefixMap,
    Triple,
    Variable,
    format_term,
    parse_term,
    term_key,
)


def _tokenize(line: str) -> List[str]:
    tokens = []
    i = 0
    n = len(line)
    while i < n:
        ch = line[i]
        if ch.isspace():
            i += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n:
                if line[j] == "\\":
                    j += 2
                    continue
                if line[j] == '"':
                    break
                j += 1
            if j >= n:
                raise ParseError(f"unterminated string: {line!r}")
            # swallow a ^^suffix if present
            k = j + 1
            while k < n and not line[k].isspace():
                k += 1
            tokens.append(line[i:k])
            i = k
            continue
        if ch == "<":
            j = line.find(">", i)
            if j < 0:
                raise ParseError(f"unterminated IRI: {line!r}")
            tokens.append(line[i:j + 1])
            i = j + 1
            continue
        j = i
        while j < n and not line[j].isspace():
            j += 1
        tokens.append(line[i:j])
        i = j
    return tokens


def parse_document(text: str, prefixes: Optional[PrefixMap] = None,
                   allow_variables: bool = False) -> Tuple[List[Triple], PrefixMap]:
    """Parse a triple document; returns the triples and the effective
    prefix map (document @prefix declarations layered over the given map)."""
    pm = PrefixMap(prefixes.as_dict() if prefixes else None)
    triples: List[Triple] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = _tokenize(line)
        if tokens[-1] == ".":
            tokens = tokens[:-1]
        elif tokens[-1].endswith("."):
            tokens[-1] = tokens[-1][:-1]
        if tokens and tokens[0] == "@prefix":
            if len(tokens) != 3 or not tokens[1].endswith(":"):
                raise ParseError(f"line {lineno}: bad @prefix declaration")
            ns = tokens[2]
            if not (ns.startswith("<") and ns.endswith(">")):
                raise ParseError(f"line {lineno}: prefix namespace must be <iri>")
            pm.register(tokens[1][:-1], ns[1:-1])
            continue
        if len(tokens) != 3:
            raise ParseError(f"line {lineno}: expected 3 terms, got {len(tokens)}")
        try:
            s, p, o = (parse_term(tok, pm) for tok in tokens)
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not allow_variables and any(isinstance(t, Variable) for t in (s, p, o)):
            raise ParseError(f"line {lineno}: variables not allowed in documents")
        if not isinstance(s, Iri) or not isinstance(p, Iri):
            raise ParseError(f"line {lineno}: subject/predicate must be IRIs")
        triples.append(Triple(s, p, o))
    return triples, pm


def load_document(path: str, prefixes: Optional[PrefixMap] = None) -> Tuple[List[Triple], PrefixMap]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_document(fh.read(), prefixes)


def dump_triples(triples, prefixes: PrefixMap) -> str:
    """Serialize triples (sorted) with a prefix header, parseable back."""
    lines = []
    for prefix, ns in sorted(prefixes.as_dict().items()):
        lines.append(f"@prefix {prefix}: <{ns}> .")
    ordered = sorted(triples, key=lambda t: (term_key(t.s), term_key(t.p), term_key(t.o)))
    for t in ordered:
        lines.append(f"{format_term(t.s, prefixes)} {format_term(t.p, prefixes)} "
                     f"{format_term(t.o, prefixes)} .")
    return "\n".join(lines) + "\n"
