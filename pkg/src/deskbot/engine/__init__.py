from deskbot.engine.model import (
    AFFORD,
    BehaviorDef,
    BehaviorInstance,
    Condition,
    EventClause,
    Goal,
    InstanceState,
    KbClause,
    PlanStep,
    Situation,
    TimeWindowClause,
)
from deskbot.engine.conditions import evaluate_situations
from deskbot.engine.selection import Decision, DecisionKind, select_goal
from deskbot.engine.manager import BehaviorEngine, TickReport

__all__ = [
    "AFFORD", "BehaviorDef", "BehaviorInstance", "Condition", "EventClause",
    "Goal", "InstanceState", "KbClause", "PlanStep", "Situation",
    "TimeWindowClause", "evaluate_situations", "Decision", "DecisionKind",
    "select_goal", "BehaviorEngine", "TickReport",
]
