"""Domain types for the behavior layer.

Situations are conjunctive conditions over KB facts, recent bus events, and
the simulated time of day. Goals carry a priority and a preemptive flag;
affordances link situations to goals and live in the KB as triples so they
stay inspectable and editable at runtime. A behavior achieves one goal by
running a static plan of steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple

from deskbot.errors import InvalidCondition, InvalidPlan, ParseError
from deskbot.kb.terms import (
    Iri,
    Pattern,
    PrefixMap,
    Variable,
    format_term,
    parse_term,
)

AFFORD = Iri("http://example.org/mario#afford")
SITUATION_CLASS = Iri("http://example.org/mario#Situation")
GOAL_CLASS = Iri("http://example.org/mario#Goal")
PRIORITY = Iri("http://example.org/mario#priority")
PREEMPTIVE = Iri("http://example.org/mario#preemptive")
DESCRIPTION = Iri("http://example.org/mario#description")
FAILED_WITH = Iri("http://example.org/mario#failedWith")

MAX_CLAUSES = 8

STEP_KINDS = ("speak", "show", "move_to", "wait_event", "assert", "retract",
              "call", "sleep")

# plan steps that are sugar for a built-in capability
STEP_CAPABILITY = {"speak": "cap:t2s", "show": "cap:hci", "move_to": "cap:motion"}


@dataclass(frozen=True)
class TimeWindowClause:
    start: str
    end: str


@dataclass(frozen=True)
class KbClause:
    pattern: Pattern
    negated: bool = False


@dataclass(frozen=True)
class EventClause:
    topic: str
    filters: Tuple[Tuple[str, object], ...]  # field -> constant or Variable


@dataclass(frozen=True)
class Condition:
    clauses: Tuple[object, ...]

    def __post_init__(self):
        if len(self.clauses) > MAX_CLAUSES:
            raise InvalidCondition(f"more than {MAX_CLAUSES} clauses")

    def topics(self) -> List[str]:
        return sorted({c.topic for c in self.clauses if isinstance(c, EventClause)})

    def bindable_variables(self) -> List[str]:
        out = set()
        for clause in self.clauses:
            if isinstance(clause, KbClause) and not clause.negated:
                out.update(clause.pattern.variables())
            elif isinstance(clause, EventClause):
                out.update(v.name for _, v in clause.filters
                           if isinstance(v, Variable))
        return sorted(out)


@dataclass(frozen=True)
class Situation:
    id: Iri
    condition: Condition
    description: str = ""


@dataclass(frozen=True)
class Goal:
    id: Iri
    priority: int
    preemptive: bool = False
    description: str = ""


@dataclass(frozen=True)
class PlanStep:
    kind: str
    args: Tuple[Tuple[str, object], ...]

    def arg(self, name: str, default=None):
        for key, value in self.args:
            if key == name:
                return value
        return default


@dataclass(frozen=True)
class BehaviorDef:
    id: Iri
    achieves: Iri
    plan: Tuple[PlanStep, ...]
    timeout_ticks: int = 100
    required_capabilities: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.plan:
            raise InvalidPlan(f"{self.id.value}: empty plan")
        for step in self.plan:
            implied = STEP_CAPABILITY.get(step.kind)
            if implied and implied not in self.required_capabilities:
                raise InvalidPlan(
                    f"{self.id.value}: step {step.kind!r} needs {implied!r} "
                    "in required_capabilities")
            if step.kind == "call":
                cap = step.arg("capability")
                if cap not in self.required_capabilities:
                    raise InvalidPlan(
                        f"{self.id.value}: call target {cap!r} not in "
                        "required_capabilities")


class InstanceState(Enum):
    ACTIVE = "Active"
    SUSPENDED = "Suspended"
    COMPLETED = "Completed"
    FAILED = "Failed"
    TERMINATED = "Terminated"


TERMINAL_STATES = (InstanceState.COMPLETED, InstanceState.FAILED,
                   InstanceState.TERMINATED)

_LEGAL = {
    (InstanceState.ACTIVE, InstanceState.SUSPENDED),
    (InstanceState.ACTIVE, InstanceState.COMPLETED),
    (InstanceState.ACTIVE, InstanceState.FAILED),
    (InstanceState.ACTIVE, InstanceState.TERMINATED),
    (InstanceState.SUSPENDED, InstanceState.ACTIVE),
    (InstanceState.SUSPENDED, InstanceState.TERMINATED),
}


@dataclass
class BehaviorInstance:
    instance_id: str
    behavior_id: Iri
    goal_id: Iri
    bindings: Dict[str, object]
    state: InstanceState
    pc: int
    started_at: int
    remaining_ticks: int       # instance budget; frozen while suspended
    wait_deadline: Optional[int] = None   # for wait_event / sleep steps

    def transition(self, to_state: InstanceState) -> None:
        if (self.state, to_state) not in _LEGAL:
            raise InvalidPlan(
                f"{self.instance_id}: illegal transition "
                f"{self.state.value} -> {to_state.value}")
        self.state = to_state

    def summary(self) -> Dict[str, object]:
        return {
            "instance_id": self.instance_id,
            "behavior_id": self.behavior_id.value,
            "goal_id": self.goal_id.value,
            "state": self.state.value,
            "pc": self.pc,
            "started_at": self.started_at,
            "remaining_ticks": self.remaining_ticks,
            "bindings": {k: format_term(v) if not isinstance(v, str) else v
                         for k, v in sorted(self.bindings.items())},
        }


# --- JSON parsing (bundle documents) -----------------------------------------

def _term(token, prefixes: PrefixMap):
    if not isinstance(token, str):
        from deskbot.kb.terms import literal_from_python
        return literal_from_python(token)
    return parse_term(token, prefixes)


def condition_from_json(doc: Mapping, prefixes: PrefixMap) -> Condition:
    clauses = []
    for raw in doc.get("all", []):
        if "time_window" in raw:
            tw = raw["time_window"]
            clauses.append(TimeWindowClause(start=tw["start"], end=tw["end"]))
        elif "kb" in raw or "kb_not" in raw:
            key = "kb" if "kb" in raw else "kb_not"
            s, p, o = (_term(tok, prefixes) for tok in raw[key])
            clauses.append(KbClause(Pattern(s, p, o), negated=(key == "kb_not")))
        elif "event" in raw:
            ev = raw["event"]
            filters = []
            for fname, fval in sorted(ev.get("filters", {}).items()):
                if isinstance(fval, str) and fval.startswith("?"):
                    filters.append((fname, Variable(fval[1:])))
                else:
                    filters.append((fname, fval))
            clauses.append(EventClause(topic=ev["topic"], filters=tuple(filters)))
        else:
            raise ParseError(f"unknown condition clause: {sorted(raw)}")
    return Condition(tuple(clauses))


def situation_from_json(doc: Mapping, prefixes: PrefixMap) -> Situation:
    return Situation(id=Iri(prefixes.expand(doc["id"])),
                     condition=condition_from_json(doc.get("condition", {}), prefixes),
                     description=doc.get("description", ""))


def goal_from_json(doc: Mapping, prefixes: PrefixMap) -> Goal:
    priority = int(doc["priority"])
    if not 0 <= priority <= 100:
        raise ParseError(f"goal {doc['id']}: priority must be 0..100")
    return Goal(id=Iri(prefixes.expand(doc["id"])), priority=priority,
                preemptive=bool(doc.get("preemptive", False)),
                description=doc.get("description", ""))


def plan_step_from_json(doc: Mapping) -> PlanStep:
    if len(doc) != 1:
        raise ParseError(f"plan step must have exactly one key: {sorted(doc)}")
    kind, args = next(iter(doc.items()))
    if kind not in STEP_KINDS:
        raise ParseError(f"unknown plan step kind {kind!r}")
    if kind in ("assert", "retract"):
        if not isinstance(args, (list, tuple)) or len(args) != 3:
            raise ParseError(f"{kind} step needs [s, p, o]")
        return PlanStep(kind, (("s", args[0]), ("p", args[1]), ("o", args[2])))
    if not isinstance(args, Mapping):
        raise ParseError(f"{kind} step needs an args object")
    frozen = []
    for key in sorted(args):
        value = args[key]
        if isinstance(value, dict):
            value = tuple(sorted(value.items()))
        elif isinstance(value, list):
            value = tuple(value)
        frozen.append((key, value))
    return PlanStep(kind, tuple(frozen))


def behavior_from_json(doc: Mapping, prefixes: PrefixMap) -> BehaviorDef:
    plan = tuple(plan_step_from_json(s) for s in doc.get("plan", []))
    return BehaviorDef(
        id=Iri(prefixes.expand(doc["id"])),
        achieves=Iri(prefixes.expand(doc["achieves"])),
        plan=plan,
        timeout_ticks=int(doc.get("timeout_ticks", 100)),
        required_capabilities=tuple(doc.get("required_capabilities", ())),
    )
