"""The blackboard: a versioned triple store with pattern queries and
RDFS-subset inference.

Single-writer, multi-reader: every mutation takes the writer lock and is
applied as one atomic batch that bumps the version, re-derives the inferred
set, and fires one change notification. Readers work against immutable
snapshots.

Retraction recomputes the inferred set from scratch rather than doing truth
maintenance: correctness over speed at desk scale. Assertion goes through
the same recompute path.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from deskbot.errors import CannotRetractInferred, IllFormedTriple
from deskbot.kb.reason import compute_closure
from deskbot.kb.terms import (
    Iri,
    Literal,
    Pattern,
    Triple,
    Variable,
    term_key,
)

Binding = Dict[str, object]


def _match(pattern: Pattern, triple: Triple, binding: Binding) -> Optional[Binding]:
    out = dict(binding)
    for pat_term, fact_term in ((pattern.s, triple.s), (pattern.p, triple.p),
                                (pattern.o, triple.o)):
        if isinstance(pat_term, Variable):
            bound = out.get(pat_term.name)
            if bound is None:
                out[pat_term.name] = fact_term
            elif bound != fact_term:
                return None
        elif pat_term != fact_term:
            return None
    return out


def _binding_key(binding: Binding) -> Tuple:
    return tuple((name, term_key(binding[name])) for name in sorted(binding))


def solve(triples: Iterable[Triple], patterns: Sequence[Pattern]) -> List[Binding]:
    """All variable bindings satisfying the conjunction, in canonical
    (sorted-binding) order. Shared variables join across patterns."""
    if not patterns:
        raise IllFormedTriple("query needs at least one pattern")
    facts = list(triples)
    bindings: List[Binding] = [{}]
    for pattern in patterns:
        if isinstance(pattern.s, Literal) or isinstance(pattern.p, Literal):
            raise IllFormedTriple("subject/predicate of a pattern must be IRI or variable")
        extended: Dict[Tuple, Binding] = {}
        for binding in bindings:
            for fact in facts:
                candidate = _match(pattern, fact, binding)
                if candidate is not None:
                    extended.setdefault(_binding_key(candidate), candidate)
        bindings = list(extended.values())
        if not bindings:
            return []
    return sorted(bindings, key=_binding_key)


def matches(triples: Iterable[Triple], pattern: Pattern) -> bool:
    """Membership / existence test for a single (possibly open) pattern."""
    for fact in triples:
        if _match(pattern, fact, {}) is not None:
            return True
    return False


@dataclass(frozen=True)
class Snapshot:
    """Frozen view of the store at one version."""

    version: int
    triples: FrozenSet[Triple]
    asserted: FrozenSet[Triple]

    def query(self, patterns: Sequence[Pattern]) -> List[Binding]:
        return solve(self.triples, patterns)

    def holds(self, pattern: Pattern) -> bool:
        return matches(self.triples, pattern)


@dataclass
class MutationResult:
    version: int
    changed: bool
    added: List[Triple]
    removed: List[Triple]


ChangeListener = Callable[[MutationResult], None]


class TripleStore:
    def __init__(self):
        self._asserted: Dict[Triple, str] = {}      # triple -> source component
        self._inferred: Dict[Triple, str] = {}      # triple -> rule id
        self._version = 0
        self._lock = threading.Lock()
        self._listeners: List[ChangeListener] = []
        self._snapshot_cache: Optional[Snapshot] = None

    # -- change notification --------------------------------------------------

    def on_change(self, listener: ChangeListener) -> None:
        self._listeners.append(listener)

    def _notify(self, result: MutationResult) -> None:
        for listener in self._listeners:
            listener(result)

    # -- mutations --------------------------------------------------------------

    def mutate(self, add: Sequence[Triple] = (), remove: Sequence[Triple] = (),
               source: str = "unknown") -> MutationResult:
        """Apply one atomic batch of retractions and assertions.

        Retracting a triple that exists only as inferred raises
        CannotRetractInferred; retracting an absent triple is a no-op.
        """
        for t in tuple(add) + tuple(remove):
            if not isinstance(t, Triple):
                raise IllFormedTriple(f"not a ground triple: {t!r}")
        with self._lock:
            removed: List[Triple] = []
            added: List[Triple] = []
            for t in remove:
                if t in self._asserted:
                    del self._asserted[t]
                    removed.append(t)
                elif t in self._inferred:
                    raise CannotRetractInferred(
                        f"{t} is only derivable, not asserted")
            for t in add:
                if t not in self._asserted:
                    self._asserted[t] = source
                    added.append(t)
            changed = bool(added or removed)
            if changed:
                self._inferred = compute_closure(self._asserted)
                self._version += 1
                self._snapshot_cache = None
            result = MutationResult(version=self._version, changed=changed,
                                    added=added, removed=removed)
        if changed:
            self._notify(result)
        return result

    def assert_fact(self, triple: Triple, source: str = "unknown") -> MutationResult:
        return self.mutate(add=[triple], source=source)

    def retract_fact(self, triple: Triple, source: str = "unknown") -> MutationResult:
        return self.mutate(remove=[triple], source=source)

    def retract_subject(self, subject: Iri, source: str = "unknown") -> MutationResult:
        doomed = [t for t in self._asserted if t.s == subject]
        return self.mutate(remove=doomed, source=source)

    # -- reads -------------------------------------------------------------------

    @property
    def version(self) -> int:
        return self._version

    def has_asserted(self, triple: Triple) -> bool:
        return triple in self._asserted

    def holds(self, triple: Triple) -> bool:
        return triple in self._asserted or triple in self._inferred

    def asserted_triples(self) -> List[Triple]:
        return list(self._asserted)

    def asserted_with_source(self) -> List[Tuple[Triple, str]]:
        return list(self._asserted.items())

    def inferred_triples(self) -> Dict[Triple, str]:
        return dict(self._inferred)

    def snapshot(self) -> Snapshot:
        with self._lock:
            if self._snapshot_cache is None:
                self._snapshot_cache = Snapshot(
                    version=self._version,
                    triples=frozenset(self._asserted) | frozenset(self._inferred),
                    asserted=frozenset(self._asserted),
                )
            return self._snapshot_cache

    def query(self, patterns: Sequence[Pattern]) -> List[Binding]:
        return self.snapshot().query(patterns)

    def materialize(self) -> Tuple[int, int]:
        """Recompute the inferred set from scratch; returns
        (inferred_count, version). Idempotent: the store keeps the fixpoint
        maintained on every mutation, so this never changes state."""
        with self._lock:
            self._inferred = compute_closure(self._asserted)
            self._snapshot_cache = None
            return len(self._inferred), self._version
