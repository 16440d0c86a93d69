from deskbot.kb.terms import (
    Iri,
    Literal,
    LiteralKind,
    Pattern,
    PrefixMap,
    Triple,
    Variable,
    parse_term,
    term_key,
)
from deskbot.kb.store import Snapshot, TripleStore
from deskbot.kb.textio import dump_triples, load_document, parse_document

__all__ = [
    "Iri", "Literal", "LiteralKind", "Pattern", "PrefixMap", "Triple",
    "Variable", "parse_term", "term_key", "Snapshot", "TripleStore",
    "dump_triples", "load_document", "parse_document",
]
