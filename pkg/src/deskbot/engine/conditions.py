"""Situation evaluation: which conditions hold right now, and under which
variable bindings.

A condition is a conjunction of time windows, KB patterns (positive ones
join on shared variables, negated ones filter), and event patterns matched
against the envelopes that arrived in the current evaluation window. Each
fulfilled situation reports one canonical binding: the smallest under the
sorted-binding order.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from deskbot.clock import LogicalClock
from deskbot.engine.model import (
    Condition,
    EventClause,
    KbClause,
    Situation,
    TimeWindowClause,
)
from deskbot.kb.store import Snapshot, _binding_key
from deskbot.kb.terms import Iri, Pattern, Variable, literal_from_python

Binding = Dict[str, object]


def _substitute(pattern: Pattern, binding: Binding) -> Pattern:
    def sub(term):
        if isinstance(term, Variable) and term.name in binding:
            return binding[term.name]
        return term
    return Pattern(sub(pattern.s), sub(pattern.p), sub(pattern.o))


def _event_value_term(value):
    """Payload scalars become literals so they can join with KB terms."""
    if isinstance(value, str) and (value.startswith("http://")
                                   or value.startswith("https://")):
        return Iri(value)
    return literal_from_python(value)


def _match_event(clause: EventClause, payload: Dict, binding: Binding) -> Optional[Binding]:
    out = dict(binding)
    for fname, expected in clause.filters:
        if fname not in payload:
            return None
        actual = payload[fname]
        if isinstance(expected, Variable):
            term = _event_value_term(actual)
            bound = out.get(expected.name)
            if bound is None:
                out[expected.name] = term
            elif bound != term:
                return None
        elif actual != expected:
            return None
    return out


def evaluate_condition(condition: Condition, snapshot: Snapshot,
                       window: Sequence, clock: LogicalClock) -> List[Binding]:
    """All satisfying bindings for one condition (unsorted, deduped)."""
    positives: List[Pattern] = []
    negatives: List[Pattern] = []
    events: List[EventClause] = []
    for clause in condition.clauses:
        if isinstance(clause, TimeWindowClause):
            if not clock.in_window(clause.start, clause.end):
                return []
        elif isinstance(clause, KbClause):
            (negatives if clause.negated else positives).append(clause.pattern)
        elif isinstance(clause, EventClause):
            events.append(clause)

    bindings: List[Binding] = snapshot.query(positives) if positives else [{}]
    if not bindings:
        return []

    for pattern in negatives:
        bindings = [b for b in bindings
                    if not snapshot.holds(_substitute(pattern, b))]
        if not bindings:
            return []

    for clause in events:
        extended: Dict[Tuple, Binding] = {}
        for binding in bindings:
            for env in window:
                if env.topic != clause.topic:
                    continue
                candidate = _match_event(clause, env.payload, binding)
                if candidate is not None:
                    extended.setdefault(_binding_key(candidate), candidate)
        bindings = list(extended.values())
        if not bindings:
            return []
    return bindings


def evaluate_situations(situations: Iterable[Situation], snapshot: Snapshot,
                        window: Sequence, clock: LogicalClock
                        ) -> List[Tuple[Situation, Binding]]:
    """Fulfilled situations with their canonical (smallest) binding,
    ordered by situation id."""
    out = []
    for situation in sorted(situations, key=lambda s: s.id.value):
        bindings = evaluate_condition(situation.condition, snapshot, window, clock)
        if bindings:
            out.append((situation, min(bindings, key=_binding_key)))
    return out
