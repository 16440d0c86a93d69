"""The behavior manager: registration, arbitration, plan interpretation,
and the deliberation loop.

One tick = drain the event window, snapshot the KB, evaluate situations,
map fulfilled situations to goals through the affordance triples, select,
dispatch, step the single active instance once, settle completions, advance
the clock. The loop owns all engine state; external inputs (operator
commands, deploy actions) are applied between ticks by the runtime.

At most one instance is Active at a time; preempted instances wait on a
LIFO stack and resume in reverse suspension order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from deskbot.bus import MessageBroker
from deskbot.clock import LogicalClock
from deskbot.engine.conditions import _event_value_term, evaluate_situations
from deskbot.engine.model import (
    AFFORD,
    DESCRIPTION,
    FAILED_WITH,
    GOAL_CLASS,
    PREEMPTIVE,
    PRIORITY,
    SITUATION_CLASS,
    BehaviorDef,
    BehaviorInstance,
    Goal,
    InstanceState,
    PlanStep,
    Situation,
)
from deskbot.engine.selection import Decision, DecisionKind, select_goal
from deskbot.errors import (
    CapabilityError,
    DeskbotError,
    DuplicateBehaviorId,
    InvalidCondition,
    InvalidPlan,
    Lagged,
    NoActiveInstance,
    NoBehaviorForGoal,
    UnknownGoal,
    UnresolvedGoal,
)
from deskbot.kb.store import TripleStore
from deskbot.kb.terms import (
    Iri,
    Literal,
    LiteralKind,
    Pattern,
    PrefixMap,
    Triple,
    Variable,
    format_term,
    parse_term,
)

LIFECYCLE_TOPIC = "behavior/lifecycle"
WARNINGS_TOPIC = "behavior/warnings"

_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass
class StepOutcome:
    kind: str                 # Progressed | Waiting | Completed | Failed
    reason: Optional[str] = None

    def to_dict(self):
        out = {"kind": self.kind}
        if self.reason:
            out["reason"] = self.reason
        return out


@dataclass
class TickReport:
    tick: int
    fulfilled: List[Tuple[str, Dict[str, str]]]
    decision: Dict
    transitions: List[Dict]
    step: Optional[Dict]
    warnings: List[Dict] = field(default_factory=list)

    def to_dict(self):
        return {"tick": self.tick, "fulfilled": self.fulfilled,
                "decision": self.decision, "transitions": self.transitions,
                "step": self.step, "warnings": self.warnings}


def _display(term, prefixes: PrefixMap) -> str:
    if isinstance(term, Iri):
        return prefixes.compact(term.value)
    if isinstance(term, Literal):
        if term.kind == LiteralKind.BOOLEAN:
            return "true" if term.value else "false"
        return str(term.value)
    return str(term)


class BehaviorEngine:
    def __init__(self, kb: TripleStore, broker: MessageBroker,
                 capabilities, clock: LogicalClock,
                 prefixes: Optional[PrefixMap] = None):
        self.kb = kb
        self.broker = broker
        self.capabilities = capabilities
        self.clock = clock
        self.prefixes = prefixes or PrefixMap()

        self._situations: Dict[str, Situation] = {}
        self._goals: Dict[str, Goal] = {}
        self._behaviors: Dict[str, BehaviorDef] = {}
        self._owners: Dict[str, Set[str]] = {}        # owner -> {"kind:id", ...}
        self._kb_adds: Dict[str, List[Triple]] = {}   # owner -> triples we added
        self._subscriptions = {}
        self._active: Optional[BehaviorInstance] = None
        self._stack: List[BehaviorInstance] = []
        self._instance_counter = 0
        self._window: List = []
        self._last_report: Optional[TickReport] = None
        self._pending_warnings: List[Dict] = []
        self._tick_transitions: List[Dict] = []

        self.broker.schemas.define("BehaviorLifecycle", {
            "instance_id": "string", "behavior_id": "string",
            "goal_id": "string",
            "from_state": {"type": "string", "required": False},
            "to_state": "string", "origin": "string",
            "reason": {"type": "string", "required": False}})
        self.broker.schemas.define("EngineWarning", {"kind": "string",
                                                     "detail": "string"})
        self.broker.create_topic(LIFECYCLE_TOPIC, "BehaviorLifecycle")
        self.broker.create_topic(WARNINGS_TOPIC, "EngineWarning")

    # ------------------------------------------------------------------ views

    @property
    def active_instance(self) -> Optional[BehaviorInstance]:
        return self._active

    @property
    def suspended_instances(self) -> List[BehaviorInstance]:
        return list(self._stack)

    @property
    def last_report(self) -> Optional[TickReport]:
        return self._last_report

    def behavior_view(self) -> List[Dict]:
        out = []
        for bid in sorted(self._behaviors):
            bd = self._behaviors[bid]
            goal = self._goals.get(bd.achieves.value)
            out.append({
                "behavior_id": bid,
                "achieves": bd.achieves.value,
                "priority": goal.priority if goal else None,
                "preemptive": goal.preemptive if goal else None,
                "plan_length": len(bd.plan),
                "timeout_ticks": bd.timeout_ticks,
                "required_capabilities": list(bd.required_capabilities),
            })
        return out

    def registration_keys(self, owner: str) -> List[str]:
        return sorted(self._owners.get(owner, ()))

    def all_registration_keys(self) -> Dict[str, List[str]]:
        return {owner: sorted(keys) for owner, keys in self._owners.items()}

    # ------------------------------------------------------------ registration

    def _own(self, owner: str, kind: str, key: str) -> None:
        self._owners.setdefault(owner, set()).add(f"{kind}:{key}")

    def _assert_owned(self, owner: str, triples: List[Triple]) -> None:
        result = self.kb.mutate(add=triples, source=f"engine:{owner}")
        self._kb_adds.setdefault(owner, []).extend(result.added)

    def register_situation(self, situation: Situation, owner: str = "core") -> None:
        for topic in situation.condition.topics():
            if not self.broker.has_topic(topic):
                raise InvalidCondition(
                    f"{situation.id.value}: unknown topic {topic!r}")
            self._ensure_subscribed(topic)
        self._situations[situation.id.value] = situation
        self._own(owner, "situation", situation.id.value)
        triples = [Triple(situation.id, Iri(
            "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"), SITUATION_CLASS)]
        if situation.description:
            triples.append(Triple(situation.id, DESCRIPTION,
                                  Literal(LiteralKind.STRING, situation.description)))
        self._assert_owned(owner, triples)

    def register_goal(self, goal: Goal, owner: str = "core") -> None:
        self._goals[goal.id.value] = goal
        self._own(owner, "goal", goal.id.value)
        self._assert_owned(owner, [
            Triple(goal.id, Iri("http://www.w3.org/1999/02/22-rdf-syntax-ns#type"),
                   GOAL_CLASS),
            Triple(goal.id, PRIORITY, Literal(LiteralKind.INTEGER, goal.priority)),
            Triple(goal.id, PREEMPTIVE, Literal(LiteralKind.BOOLEAN, goal.preemptive)),
        ])

    def register_affordance(self, situation_id: Iri, goal_id: Iri,
                            owner: str = "core") -> None:
        self._own(owner, "affordance", f"{situation_id.value}->{goal_id.value}")
        self._assert_owned(owner, [Triple(situation_id, AFFORD, goal_id)])

    def register_behavior(self, definition: BehaviorDef,
                          situations: Sequence[Situation] = (),
                          goals: Sequence[Goal] = (),
                          affordances: Sequence[Tuple[Iri, Iri]] = (),
                          owner: str = "core") -> str:
        if definition.id.value in self._behaviors:
            raise DuplicateBehaviorId(definition.id.value)
        for goal in goals:
            self.register_goal(goal, owner)
        for situation in situations:
            self.register_situation(situation, owner)
        for sid, gid in affordances:
            self.register_affordance(sid, gid, owner)
        if definition.achieves.value not in self._goals:
            raise UnresolvedGoal(
                f"{definition.id.value} achieves unknown goal "
                f"{definition.achieves.value}")
        for step in definition.plan:
            if step.kind == "wait_event":
                topic = step.arg("topic")
                if not self.broker.has_topic(topic):
                    raise InvalidPlan(
                        f"{definition.id.value}: wait_event on unknown "
                        f"topic {topic!r}")
                self._ensure_subscribed(topic)
        for cap in definition.required_capabilities:
            if not self.capabilities.has(cap):
                self._warn("missing_capability",
                           f"{definition.id.value} requires {cap!r} "
                           "(registration deferred until provided)")
        self._behaviors[definition.id.value] = definition
        self._own(owner, "behavior", definition.id.value)
        return definition.id.value

    def deregister_owner(self, owner: str, origin: str = "deploy") -> None:
        """Remove everything a bundle registered; its instances terminate."""
        keys = self._owners.pop(owner, set())
        behavior_ids = {k.split(":", 1)[1] for k in keys if k.startswith("behavior:")}
        if self._active is not None and self._active.behavior_id.value in behavior_ids:
            self._finalize(self._active, InstanceState.TERMINATED,
                           origin=origin, reason="bundle stopped")
            self._active = None
            self._resume_top(origin=origin)
        for inst in [i for i in self._stack
                     if i.behavior_id.value in behavior_ids]:
            self._stack.remove(inst)
            self._transition(inst, InstanceState.TERMINATED, origin=origin,
                             reason="bundle stopped")
        for key in keys:
            kind, _, ident = key.partition(":")
            if kind == "behavior":
                self._behaviors.pop(ident, None)
            elif kind == "situation":
                self._situations.pop(ident, None)
            elif kind == "goal":
                self._goals.pop(ident, None)
        added = self._kb_adds.pop(owner, [])
        still = [t for t in added if self.kb.has_asserted(t)]
        if still:
            self.kb.mutate(remove=still, source=f"engine:{owner}")

    def _ensure_subscribed(self, topic: str) -> None:
        if topic not in self._subscriptions:
            self._subscriptions[topic] = self.broker.subscribe(
                topic, "behavior-engine", "latest")

    # ------------------------------------------------------------------ events

    def _publish_lifecycle(self, instance: BehaviorInstance,
                           from_state: Optional[InstanceState],
                           origin: str, reason: Optional[str]) -> None:
        payload = {"instance_id": instance.instance_id,
                   "behavior_id": instance.behavior_id.value,
                   "goal_id": instance.goal_id.value,
                   "to_state": instance.state.value,
                   "origin": origin}
        if from_state is not None:
            payload["from_state"] = from_state.value
        if reason:
            payload["reason"] = reason
        self.broker.publish(LIFECYCLE_TOPIC, payload, "behavior-engine")

    def _warn(self, kind: str, detail: str) -> None:
        self.broker.publish(WARNINGS_TOPIC, {"kind": kind, "detail": detail},
                            "behavior-engine")
        self._pending_warnings.append({"kind": kind, "detail": detail})

    def _transition(self, instance: BehaviorInstance, to_state: InstanceState,
                    origin: str, reason: Optional[str] = None) -> Dict:
        from_state = instance.state
        instance.transition(to_state)
        self._publish_lifecycle(instance, from_state, origin, reason)
        entry = {"instance_id": instance.instance_id,
                 "behavior_id": instance.behavior_id.value,
                 "from": from_state.value, "to": to_state.value,
                 "origin": origin}
        if reason:
            entry["reason"] = reason
        self._tick_transitions.append(entry)
        return entry

    # --------------------------------------------------------------- dispatch

    def _behavior_for_goal(self, goal_id: Iri) -> Optional[BehaviorDef]:
        matching = sorted(b for b in self._behaviors
                          if self._behaviors[b].achieves == goal_id)
        return self._behaviors[matching[0]] if matching else None

    def _activate(self, goal: Goal, binding: Dict, origin: str
                  ) -> Optional[BehaviorInstance]:
        definition = self._behavior_for_goal(goal.id)
        if definition is None:
            raise NoBehaviorForGoal(goal.id.value)
        self._instance_counter += 1
        instance = BehaviorInstance(
            instance_id=f"bi-{self._instance_counter}",
            behavior_id=definition.id, goal_id=goal.id,
            bindings=dict(binding), state=InstanceState.ACTIVE, pc=0,
            started_at=self.clock.tick,
            remaining_ticks=definition.timeout_ticks)
        self._active = instance
        self._publish_lifecycle(instance, None, origin, None)
        self._tick_transitions.append({
            "instance_id": instance.instance_id,
            "behavior_id": definition.id.value,
            "from": None, "to": "Active", "origin": origin})
        missing = self._unresolvable_variable(definition, set(binding))
        if missing is not None:
            self._fail_active(f"unresolved_variable:{missing}", origin)
        return self._active

    def _unresolvable_variable(self, definition: BehaviorDef,
                               available: Set[str]) -> Optional[str]:
        bound = set(available)
        for step in definition.plan:
            for var in _referenced_variables(step):
                if var not in bound:
                    return var
            if step.kind == "wait_event":
                for _, value in step.arg("filters", ()):
                    if isinstance(value, str) and value.startswith("?"):
                        bound.add(value[1:])
        return None

    def dispatch(self, decision: Decision, origin: str = "engine") -> None:
        if decision.kind == DecisionKind.NONE:
            return
        if self._behavior_for_goal(decision.goal.id) is None:
            self._warn("no_behavior_for_goal", decision.goal.id.value)
            return
        if decision.kind == DecisionKind.PREEMPT:
            current = self._active
            self._transition(current, InstanceState.SUSPENDED, origin,
                             reason=f"preempted by {decision.goal.id.value}")
            self._stack.append(current)
            self._active = None
        self._activate(decision.goal, decision.binding_map(), origin)

    # ------------------------------------------------------------- force path

    def force_activate(self, goal_id: str, origin: str = "supervisor") -> str:
        expanded = self.prefixes.expand(goal_id)
        goal = self._goals.get(expanded)
        if goal is None:
            raise UnknownGoal(goal_id)
        if self._behavior_for_goal(goal.id) is None:
            raise NoBehaviorForGoal(goal_id)
        if self._active is not None:
            current = self._active
            self._transition(current, InstanceState.SUSPENDED, origin,
                             reason=f"forced {goal.id.value}")
            self._stack.append(current)
            self._active = None
        instance = self._activate(goal, {}, origin)
        return instance.instance_id if instance else ""

    def force_suspend(self, origin: str = "supervisor") -> None:
        if self._active is None:
            raise NoActiveInstance("nothing to suspend")
        self._transition(self._active, InstanceState.SUSPENDED, origin,
                         reason="forced suspend")
        self._stack.append(self._active)
        self._active = None

    def force_resume(self, origin: str = "supervisor") -> None:
        if self._active is not None:
            raise NoActiveInstance("an instance is already active")
        if not self._stack:
            raise NoActiveInstance("suspension stack is empty")
        self._resume_top(origin=origin)

    def force_terminate(self, origin: str = "supervisor") -> None:
        if self._active is None:
            raise NoActiveInstance("nothing to terminate")
        self._finalize(self._active, InstanceState.TERMINATED, origin,
                       reason="forced terminate")
        self._active = None
        self._resume_top(origin=origin)

    # ------------------------------------------------------------------- steps

    def _resume_top(self, origin: str) -> None:
        if self._active is None and self._stack:
            instance = self._stack.pop()
            self._transition(instance, InstanceState.ACTIVE, origin, "resumed")
            self._active = instance

    def _finalize(self, instance: BehaviorInstance, state: InstanceState,
                  origin: str, reason: Optional[str] = None) -> None:
        self._transition(instance, state, origin, reason)
        if state == InstanceState.FAILED and reason:
            iri = Iri(self.prefixes.expand(f"mario:instance/{instance.instance_id}"))
            self.kb.mutate(add=[Triple(iri, FAILED_WITH,
                                       Literal(LiteralKind.STRING, reason))],
                           source="behavior-engine")

    def _fail_active(self, reason: str, origin: str = "engine") -> None:
        instance = self._active
        self._active = None
        self._finalize(instance, InstanceState.FAILED, origin, reason)
        self._resume_top(origin="engine")

    def _resolve_text(self, value, bindings: Dict) -> str:
        if isinstance(value, str):
            if value.startswith("?"):
                term = bindings.get(value[1:])
                if term is None:
                    raise DeskbotError(f"unresolved_variable:{value[1:]}")
                return _display(term, self.prefixes)
            def repl(match):
                term = bindings.get(match.group(1))
                if term is None:
                    raise DeskbotError(f"unresolved_variable:{match.group(1)}")
                return _display(term, self.prefixes)
            return _PLACEHOLDER.sub(repl, value)
        return value

    def _resolve_term(self, template, bindings: Dict):
        if isinstance(template, str) and template.startswith("?"):
            term = bindings.get(template[1:])
            if term is None:
                raise DeskbotError(f"unresolved_variable:{template[1:]}")
            return term
        text = self._resolve_text(template, bindings)
        if isinstance(text, str):
            return parse_term(text, self.prefixes)
        from deskbot.kb.terms import literal_from_python
        return literal_from_python(text)

    def _resolve_args(self, pairs, bindings: Dict) -> Dict:
        out = {}
        for key, value in pairs:
            if isinstance(value, tuple) and value and isinstance(value[0], tuple):
                out[key] = self._resolve_args(value, bindings)
            elif isinstance(value, tuple):
                out[key] = [self._resolve_text(v, bindings) for v in value]
            elif isinstance(value, str):
                out[key] = self._resolve_text(value, bindings)
            else:
                out[key] = value
        return out

    def step(self, instance: BehaviorInstance) -> StepOutcome:
        """Execute the current plan step of an Active instance once."""
        definition = self._behaviors.get(instance.behavior_id.value)
        if definition is None:
            return StepOutcome("Failed", "behavior deregistered")
        if instance.pc >= len(definition.plan):
            return StepOutcome("Completed")
        if instance.remaining_ticks <= 0:
            return StepOutcome("Failed", "timeout")
        step = definition.plan[instance.pc]
        try:
            outcome = self._execute(step, instance)
        except CapabilityError as exc:
            outcome = StepOutcome("Failed", f"{type(exc).__name__}: {exc}")
        except DeskbotError as exc:
            outcome = StepOutcome("Failed", str(exc))
        instance.remaining_ticks -= 1
        return outcome

    def _execute(self, step: PlanStep, instance: BehaviorInstance) -> StepOutcome:
        bindings = instance.bindings
        now = self.clock.tick
        if step.kind == "speak":
            self.capabilities.invoke("cap:t2s", "speak", {
                "text": self._resolve_text(step.arg("text"), bindings)})
        elif step.kind == "show":
            widget = self._resolve_args(step.arg("widget", ()), bindings)
            self.capabilities.invoke("cap:hci", "show", {"widget": widget})
        elif step.kind == "move_to":
            self.capabilities.invoke("cap:motion", "go_to", {
                "x": float(self._resolve_text(step.arg("x"), bindings)),
                "y": float(self._resolve_text(step.arg("y"), bindings))})
        elif step.kind == "assert":
            triple = Triple(self._resolve_term(step.arg("s"), bindings),
                            self._resolve_term(step.arg("p"), bindings),
                            self._resolve_term(step.arg("o"), bindings))
            self.kb.mutate(add=[triple], source=instance.instance_id)
        elif step.kind == "retract":
            triple = Triple(self._resolve_term(step.arg("s"), bindings),
                            self._resolve_term(step.arg("p"), bindings),
                            self._resolve_term(step.arg("o"), bindings))
            self.kb.mutate(remove=[triple], source=instance.instance_id)
        elif step.kind == "call":
            op = step.arg("op")
            args = self._resolve_args(step.arg("args", ()), bindings)
            self.capabilities.invoke(step.arg("capability"), op, args)
        elif step.kind == "sleep":
            if instance.wait_deadline is None:
                instance.wait_deadline = now + int(step.arg("ticks", 1))
            if now < instance.wait_deadline:
                return StepOutcome("Waiting")
            instance.wait_deadline = None
        elif step.kind == "wait_event":
            if instance.wait_deadline is None:
                instance.wait_deadline = now + int(step.arg("timeout_ticks", 10))
            matched = self._match_wait_event(step, instance)
            if not matched:
                if now >= instance.wait_deadline:
                    instance.wait_deadline = None
                    return StepOutcome("Failed", "step_timeout")
                return StepOutcome("Waiting")
            instance.wait_deadline = None
        instance.pc += 1
        return StepOutcome("Progressed")

    def _match_wait_event(self, step: PlanStep, instance: BehaviorInstance) -> bool:
        topic = step.arg("topic")
        filters = step.arg("filters", ())
        for env in self._window:
            if env.topic != topic:
                continue
            new_bindings = {}
            ok = True
            for fname, fval in filters:
                if fname not in env.payload:
                    ok = False
                    break
                actual = env.payload[fname]
                if isinstance(fval, str) and fval.startswith("?"):
                    new_bindings[fval[1:]] = _event_value_term(actual)
                else:
                    expected = self._resolve_text(fval, instance.bindings) \
                        if isinstance(fval, str) else fval
                    if actual != expected:
                        ok = False
                        break
            if ok:
                instance.bindings.update(new_bindings)
                return True
        return False

    # -------------------------------------------------------------------- tick

    def drain_window(self) -> List:
        """Collect envelopes that arrived since the previous tick."""
        window = []
        for topic in sorted(self._subscriptions):
            sub = self._subscriptions[topic]
            while True:
                try:
                    batch = self.broker.poll(sub, 512)
                except Lagged as exc:
                    self._warn("lagged", f"{topic}: {exc}")
                    continue
                window.extend(batch)
                if len(batch) < 512:
                    break
        window.sort(key=lambda env: env.global_seq)
        return window

    def tick(self) -> TickReport:
        self._tick_transitions: List[Dict] = []
        self._pending_warnings = []
        self._window = self.drain_window()
        snapshot = self.kb.snapshot()

        fulfilled = evaluate_situations(self._situations.values(), snapshot,
                                        self._window, self.clock)
        candidates = []
        for situation, binding in fulfilled:
            hits = snapshot.query([Pattern(situation.id, AFFORD, Variable("g"))])
            for hit in hits:
                goal_iri = hit["g"]
                goal = self._goals.get(goal_iri.value) \
                    if isinstance(goal_iri, Iri) else None
                if goal is None:
                    self._warn("afforded_goal_unknown", str(goal_iri))
                    continue
                candidates.append((goal, binding))

        running_goal = (self._goals.get(self._active.goal_id.value)
                        if self._active is not None else None)
        decision = select_goal(candidates, running_goal)
        self.dispatch(decision)

        step_report = None
        if self._active is not None:
            outcome = self.step(self._active)
            step_report = outcome.to_dict()
            if outcome.kind == "Completed":
                instance = self._active
                self._active = None
                self._finalize(instance, InstanceState.COMPLETED, "engine")
                self._resume_top(origin="engine")
            elif outcome.kind == "Failed":
                self._fail_active(outcome.reason or "failed")

        report = TickReport(
            tick=self.clock.tick,
            fulfilled=[(s.id.value,
                        {k: format_term(v) for k, v in sorted(b.items())})
                       for s, b in fulfilled],
            decision=decision.to_dict(),
            transitions=self._tick_transitions,
            step=step_report,
            warnings=self._pending_warnings,
        )
        self._last_report = report
        self.clock.advance()
        return report


def _referenced_variables(step: PlanStep) -> List[str]:
    """Variables a step consumes (templates and ?var references)."""
    out: List[str] = []

    def scan(value):
        if isinstance(value, str):
            if value.startswith("?"):
                out.append(value[1:])
            out.extend(_PLACEHOLDER.findall(value))
        elif isinstance(value, tuple):
            for item in value:
                scan(item)

    for key, value in step.args:
        if step.kind == "wait_event" and key == "filters":
            # filter variables BIND, they are not consumed
            for _, fval in value:
                if isinstance(fval, str) and not fval.startswith("?"):
                    scan(fval)
            continue
        scan(value)
    return out
