"""Forward-chaining inference over the RDFS subset.

Six rules, run to fixpoint over the asserted triples:

  R1  (a subClassOf b), (b subClassOf c)    -> (a subClassOf c)
  R2  (x type A), (A subClassOf B)          -> (x type B)
  R3  (p subPropertyOf q), (q subPropertyOf r) -> (p subPropertyOf r)
  R4  (x p y), (p subPropertyOf q)          -> (x q y)
  R5  (p domain C), (x p y)                 -> (x type C)
  R6  (p range C), (x p y), y an IRI        -> (y type C)

The rules are monotone over a finite Herbrand base, so iteration always
terminates. Axiom positions that are not IRIs are ignored.
"""

from __future__ import annotations

from typing import Dict, Iterable, Set

from deskbot.kb.terms import (
    RDF_TYPE,
    RDFS_DOMAIN,
    RDFS_RANGE,
    RDFS_SUBCLASS,
    RDFS_SUBPROP,
    Iri,
    Triple,
)

TYPE = Iri(RDF_TYPE)
SUBCLASS = Iri(RDFS_SUBCLASS)
SUBPROP = Iri(RDFS_SUBPROP)
DOMAIN = Iri(RDFS_DOMAIN)
RANGE = Iri(RDFS_RANGE)


def compute_closure(asserted: Iterable[Triple]) -> Dict[Triple, str]:
    """Return {inferred triple -> rule id} for all consequences of
    `asserted` that are not themselves asserted."""
    base: Set[Triple] = set(asserted)
    derived: Dict[Triple, str] = {}
    known: Set[Triple] = set(base)

    def add(triple: Triple, rule: str, pending):
        if triple not in known:
            known.add(triple)
            derived[triple] = rule
            pending.append(triple)

    pending = list(base)
    while pending:
        batch, pending = pending, []
        # index the current known set once per round
        subclass = [(t.s, t.o) for t in known
                    if t.p == SUBCLASS and isinstance(t.o, Iri)]
        subprop = [(t.s, t.o) for t in known
                   if t.p == SUBPROP and isinstance(t.o, Iri)]
        types = [(t.s, t.o) for t in known
                 if t.p == TYPE and isinstance(t.o, Iri)]
        domains = {}
        ranges = {}
        for t in known:
            if t.p == DOMAIN and isinstance(t.o, Iri):
                domains.setdefault(t.s, set()).add(t.o)
            if t.p == RANGE and isinstance(t.o, Iri):
                ranges.setdefault(t.s, set()).add(t.o)
        sub_of = {}
        for a, b in subclass:
            sub_of.setdefault(a, set()).add(b)
        prop_of = {}
        for p, q in subprop:
            prop_of.setdefault(p, set()).add(q)

        for t in batch:
            if t.p == SUBCLASS and isinstance(t.o, Iri):
                # R1 both ways around the new axiom
                for c in sub_of.get(t.o, ()):
                    add(Triple(t.s, SUBCLASS, c), "R1", pending)
                for a, supers in sub_of.items():
                    if t.s in supers:
                        add(Triple(a, SUBCLASS, t.o), "R1", pending)
                # R2 for existing instances of the subclass
                for x, cls in types:
                    if cls == t.s:
                        add(Triple(x, TYPE, t.o), "R2", pending)
            if t.p == TYPE and isinstance(t.o, Iri):
                for sup in sub_of.get(t.o, ()):
                    add(Triple(t.s, TYPE, sup), "R2", pending)
            if t.p == SUBPROP and isinstance(t.o, Iri):
                for r in prop_of.get(t.o, ()):
                    add(Triple(t.s, SUBPROP, r), "R3", pending)
                for p, supers in prop_of.items():
                    if t.s in supers:
                        add(Triple(p, SUBPROP, t.o), "R3", pending)
                for fact in list(known):
                    if fact.p == t.s:
                        add(Triple(fact.s, t.o, fact.o), "R4", pending)
            # new ground fact: propagate predicate, domain, range
            for q in prop_of.get(t.p, ()):
                add(Triple(t.s, q, t.o), "R4", pending)
            for c in domains.get(t.p, ()):
                add(Triple(t.s, TYPE, c), "R5", pending)
            if isinstance(t.o, Iri):
                for c in ranges.get(t.p, ()):
                    add(Triple(t.o, TYPE, c), "R6", pending)
            if t.p == DOMAIN and isinstance(t.o, Iri):
                for fact in list(known):
                    if fact.p == t.s:
                        add(Triple(fact.s, TYPE, t.o), "R5", pending)
            if t.p == RANGE and isinstance(t.o, Iri):
                for fact in list(known):
                    if fact.p == t.s and isinstance(fact.o, Iri):
                        add(Triple(fact.o, TYPE, t.o), "R6", pending)

    return {t: r for t, r in derived.items() if t not in base}
