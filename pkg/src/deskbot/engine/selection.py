"""Goal arbitration: pick one afforded goal, or decide to preempt.

Policy: with no running instance, activate the argmax by (priority, then
lexicographically smaller goal id). With a running instance, candidates for
the running goal are ignored, and the top remaining candidate preempts only
when it is flagged preemptive AND its priority strictly dominates the
running goal's. The decision depends only on the priority ORDER (argmax
invariance under positive-affine transforms).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Optional, Tuple

from deskbot.engine.model import Goal
from deskbot.kb.store import _binding_key

Binding = Dict[str, object]


class DecisionKind(Enum):
    ACTIVATE = "activate"
    PREEMPT = "preempt"
    NONE = "none"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    goal: Optional[Goal] = None
    binding: Tuple = ()

    def binding_map(self) -> Binding:
        return dict(self.binding)

    def to_dict(self):
        return {"kind": self.kind.value,
                "goal": self.goal.id.value if self.goal else None}


NONE_DECISION = Decision(DecisionKind.NONE)


def dedupe_candidates(candidates: Iterable[Tuple[Goal, Binding]]
                      ) -> Dict[str, Tuple[Goal, Binding]]:
    """One candidate per goal id, keeping the canonical smallest binding."""
    out: Dict[str, Tuple[Goal, Binding]] = {}
    for goal, binding in candidates:
        key = goal.id.value
        if key not in out or _binding_key(binding) < _binding_key(out[key][1]):
            out[key] = (goal, binding)
    return out


def select_goal(candidates: Iterable[Tuple[Goal, Binding]],
                running_goal: Optional[Goal]) -> Decision:
    pool = dedupe_candidates(candidates)
    if running_goal is not None:
        pool.pop(running_goal.id.value, None)
    if not pool:
        return NONE_DECISION
    top_id = min(pool, key=lambda gid: (-pool[gid][0].priority, gid))
    goal, binding = pool[top_id]
    frozen = tuple(sorted(binding.items()))
    if running_goal is None:
        return Decision(DecisionKind.ACTIVATE, goal, frozen)
    if goal.preemptive and goal.priority > running_goal.priority:
        return Decision(DecisionKind.PREEMPT, goal, frozen)
    return NONE_DECISION
