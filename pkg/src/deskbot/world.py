"""Simulated automatic layer: grid world, speech in/out, screen widgets,
motion, sensing, and the shared capability registry.

The world is a small occupancy grid (1 cell = 1 m). Motion follows shortest
4-neighbor paths found by breadth-first search; speech takes
ceil(len(text)/20) ticks; the "camera" sees the user within 8 cells of
unobstructed line of sight and the RFID reader detects tagged objects within
3 cells. Everything is driven from the runtime tick loop, so identical
scenario inputs give identical trajectories and envelope logs.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Sequence, Set, Tuple

from deskbot.bus import MessageBroker
from deskbot.errors import (
    CapabilityError,
    DuplicateCapability,
    DuplicateWidgetId,
    EmptyText,
    MalformedDescriptor,
    OutOfBounds,
    TargetIsObstacle,
    UnknownOp,
)
from deskbot.kb.store import TripleStore
from deskbot.kb.terms import Iri, Literal, LiteralKind, PrefixMap, Triple

Cell = Tuple[int, int]

WIDGET_KINDS = ("image", "video", "text", "button_row")


@dataclass
class SimConfig:
    robot_speed: float = 1.0          # cells per tick
    battery_per_cell: float = 0.1     # percent drained per cell moved
    recharge_per_tick: float = 1.0    # percent regained while docked
    rfid_range: float = 3.0           # cells
    camera_range: float = 8.0         # cells, line-of-sight
    chars_per_tick: int = 20          # speech rate
    intent_keywords: Dict[str, str] = field(default_factory=dict)


@dataclass
class Pose:
    x: float
    y: float
    heading: float = 0.0

    @property
    def cell(self) -> Cell:
        return (int(round(self.x)), int(round(self.y)))

    def to_dict(self):
        return {"x": self.x, "y": self.y, "heading": self.heading}


class GridWorld:
    def __init__(self, width: int, height: int, obstacles: Sequence[Cell],
                 robot_start: Cell, user_start: Cell,
                 tags: Sequence[Dict] = (), dock: Optional[Cell] = None):
        self.width = width
        self.height = height
        self.obstacles: Set[Cell] = {tuple(c) for c in obstacles}
        self.robot = Pose(float(robot_start[0]), float(robot_start[1]))
        self.user = Pose(float(user_start[0]), float(user_start[1]))
        self.battery = 100.0
        self.tags = [{"tag_id": t["tag_id"], "cell": tuple(t["cell"])}
                     for t in tags]
        self.dock = tuple(dock) if dock else None
        for label, cell in (("robot", self.robot.cell), ("user", self.user.cell)):
            if not self.in_bounds(cell):
                raise OutOfBounds(f"{label} starts outside the grid: {cell}")
            if cell in self.obstacles:
                raise TargetIsObstacle(f"{label} starts inside an obstacle: {cell}")

    @classmethod
    def from_dict(cls, doc: Dict) -> "GridWorld":
        return cls(width=doc["width"], height=doc["height"],
                   obstacles=doc.get("obstacles", []),
                   robot_start=doc["robot_start"], user_start=doc["user_start"],
                   tags=doc.get("tags", []), dock=doc.get("dock"))

    @classmethod
    def from_file(cls, path: str) -> "GridWorld":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.obstacles

    def shortest_path(self, start: Cell, goal: Cell) -> Optional[List[Cell]]:
        """BFS over 4-neighbor moves; returns cells after `start`, or None."""
        if start == goal:
            return []
        frontier = deque([start])
        came_from: Dict[Cell, Cell] = {start: start}
        while frontier:
            current = frontier.popleft()
            for dx, dy in ((0, -1), (-1, 0), (1, 0), (0, 1)):
                nxt = (current[0] + dx, current[1] + dy)
                if nxt in came_from or not self.passable(nxt):
                    continue
                came_from[nxt] = current
                if nxt == goal:
                    path = [nxt]
                    while came_from[path[-1]] != start:
                        path.append(came_from[path[-1]])
                    return list(reversed(path))
                frontier.append(nxt)
        return None

    def line_of_sight(self, a: Cell, b: Cell) -> bool:
        """Bresenham line with no obstacle on any intermediate cell."""
        x0, y0 = a
        x1, y1 = b
        dx, dy = abs(x1 - x0), -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        while True:
            if (x0, y0) not in (a, b) and (x0, y0) in self.obstacles:
                return False
            if (x0, y0) == (x1, y1):
                return True
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x0 += sx
            if e2 <= dx:
                err += dx
                y0 += sy

    def to_dict(self):
        return {"width": self.width, "height": self.height,
                "obstacles": sorted(self.obstacles),
                "robot": self.robot.to_dict(), "user": self.user.to_dict(),
                "battery": round(self.battery, 3),
                "tags": self.tags, "dock": self.dock}


# --- capability registry ------------------------------------------------------


@dataclass(frozen=True)
class CapabilityDescriptor:
    capability_id: str
    ops: Tuple[str, ...]
    provider: str = "core"

    def __post_init__(self):
        if not self.capability_id:
            raise MalformedDescriptor("capability_id must be non-empty")
        if not self.ops:
            raise MalformedDescriptor(f"{self.capability_id}: ops must be non-empty")


class CapabilityRegistry:
    """Shared capability instances: one handler per id, invocation-counted."""

    def __init__(self):
        self._descriptors: Dict[str, CapabilityDescriptor] = {}
        self._handlers: Dict[str, object] = {}
        self._counts: Dict[str, int] = {}

    def register(self, descriptor: CapabilityDescriptor, handler) -> str:
        if descriptor.capability_id in self._descriptors:
            raise DuplicateCapability(descriptor.capability_id)
        self._descriptors[descriptor.capability_id] = descriptor
        self._handlers[descriptor.capability_id] = handler
        self._counts[descriptor.capability_id] = 0
        return descriptor.capability_id

    def deregister(self, capability_id: str) -> None:
        self._descriptors.pop(capability_id, None)
        self._handlers.pop(capability_id, None)

    def has(self, capability_id: str) -> bool:
        return capability_id in self._descriptors

    def invoke(self, capability_id: str, op: str, args: Dict) -> Dict:
        descriptor = self._descriptors.get(capability_id)
        if descriptor is None:
            raise CapabilityError(f"unknown_capability:{capability_id}")
        if op not in descriptor.ops:
            raise UnknownOp(f"unknown_op:{capability_id}.{op}")
        self._counts[capability_id] = self._counts.get(capability_id, 0) + 1
        result = self._handlers[capability_id](op, args or {})
        return result if isinstance(result, dict) else {}

    def invocation_count(self, capability_id: str) -> int:
        return self._counts.get(capability_id, 0)

    def view(self) -> List[Dict]:
        return [{"capability_id": cid,
                 "ops": list(self._descriptors[cid].ops),
                 "provider": self._descriptors[cid].provider,
                 "invocations": self._counts.get(cid, 0)}
                for cid in sorted(self._descriptors)]


# --- built-in capabilities ------------------------------------------------------


class SpeechSynthesizer:
    """Text-to-speech simulation: FIFO queue, one utterance at a time."""

    def __init__(self, broker: MessageBroker, config: SimConfig):
        self.broker = broker
        self.config = config
        self._queue: deque = deque()
        self._current: Optional[str] = None
        self._remaining = 0

    def handle(self, op: str, args: Dict) -> Dict:
        if op == "speak":
            return self.speak(args.get("text", ""))
        raise UnknownOp(op)

    def duration(self, text: str) -> int:
        return max(1, math.ceil(len(text) / self.config.chars_per_tick))

    def speak(self, text: str) -> Dict:
        if not text:
            raise EmptyText("cannot speak empty text")
        if self._current is None:
            self._start(text)
        else:
            self._queue.append(text)
        return {"queued": self._current != text,
                "duration_ticks": self.duration(text)}

    def _start(self, text: str) -> None:
        self._current = text
        self._remaining = self.duration(text)
        self.broker.publish("speech/out",
                            {"text": text, "duration_ticks": self._remaining},
                            "cap:t2s")

    def step(self) -> None:
        if self._current is None:
            return
        self._remaining -= 1
        if self._remaining <= 0:
            done = self._current
            self._current = None
            self.broker.publish("speech/done", {"text": done}, "cap:t2s")
            if self._queue:
                self._start(self._queue.popleft())

    @property
    def speaking(self) -> bool:
        return self._current is not None


class SpeechTranscriber:
    """Speech-to-text simulation: transcripts are injected (by the console
    or a scenario) and tagged with an intent from the keyword table."""

    def __init__(self, broker: MessageBroker, config: SimConfig):
        self.broker = broker
        self.config = config

    def handle(self, op: str, args: Dict) -> Dict:
        if op == "inject":
            return {"seq": self.inject(args.get("text", ""),
                                       args.get("speaker_id", "user"))}
        raise UnknownOp(op)

    def intent_for(self, text: str) -> Optional[str]:
        lowered = text.lower()
        for keyword in sorted(self.config.intent_keywords):
            if keyword in lowered:
                return self.config.intent_keywords[keyword]
        return None

    def inject(self, text: str, speaker_id: str = "user") -> int:
        if not text:
            raise EmptyText("cannot inject empty utterance")
        payload = {"text": text, "speaker_id": speaker_id}
        intent = self.intent_for(text)
        if intent is not None:
            payload["intent"] = intent
        return self.broker.publish("speech/in", payload, "cap:s2t")


class HciManager:
    """Screen widgets plus the feedback channel for user interaction."""

    def __init__(self, broker: MessageBroker):
        self.broker = broker
        self._widgets: Dict[str, Dict] = {}

    def handle(self, op: str, args: Dict) -> Dict:
        if op == "show":
            self.show(args.get("widget", {}))
            return {}
        if op == "hide":
            self.hide(args.get("widget_id", ""))
            return {}
        raise UnknownOp(op)

    def show(self, widget: Dict) -> None:
        widget_id = widget.get("widget_id")
        if not widget_id:
            raise CapabilityError("widget needs a widget_id")
        if widget.get("kind") not in WIDGET_KINDS:
            raise CapabilityError(f"unknown widget kind {widget.get('kind')!r}")
        if widget_id in self._widgets:
            raise DuplicateWidgetId(widget_id)
        self._widgets[widget_id] = dict(widget)

    def hide(self, widget_id: str) -> None:
        self._widgets.pop(widget_id, None)

    def press(self, widget_id: str, action: str = "press") -> bool:
        """User interaction (from console or scenario). No event for
        widgets that are not on screen."""
        if widget_id not in self._widgets:
            return False
        self.broker.publish("hci/events",
                            {"widget_id": widget_id, "action": action}, "cap:hci")
        return True

    def widgets(self) -> List[Dict]:
        return [dict(w) for _, w in sorted(self._widgets.items())]


class MotionController:
    """go-to / follow / recharge routines over BFS grid paths."""

    def __init__(self, broker: MessageBroker, world: GridWorld, config: SimConfig):
        self.broker = broker
        self.world = world
        self.config = config
        self.mode = "idle"              # idle | goto | follow | recharge
        self._path: List[Cell] = []
        self._target: Optional[Cell] = None
        self._budget = 0.0

    def handle(self, op: str, args: Dict) -> Dict:
        if op == "go_to":
            self.go_to(float(args["x"]), float(args["y"]))
            return {}
        if op == "stop":
            self.stop()
            return {}
        if op == "follow_user":
            self.mode = "follow"
            self._target = None
            return {}
        if op == "recharge":
            return self.recharge()
        raise UnknownOp(op)

    def go_to(self, x: float, y: float) -> None:
        cell = (int(round(x)), int(round(y)))
        if not self.world.in_bounds(cell):
            raise OutOfBounds(f"target {cell} outside the grid")
        if cell in self.world.obstacles:
            raise TargetIsObstacle(f"target {cell} is an obstacle")
        self.mode = "goto"
        self._target = cell
        self._path = []      # planned lazily on the next step
        self._budget = 0.0

    def stop(self) -> None:
        self.mode = "idle"
        self._path = []
        self._target = None

    def recharge(self) -> Dict:
        if self.world.dock is None:
            raise CapabilityError("no dock in this world")
        if self.world.robot.cell != self.world.dock:
            raise CapabilityError("recharge requires the robot to be docked")
        self.mode = "recharge"
        return {"battery": self.world.battery}

    def _fail(self, reason: str) -> None:
        self.broker.publish("motion/failed", {"reason": reason}, "cap:motion")
        self.stop()

    def step(self) -> None:
        if self.mode == "recharge":
            self.world.battery = min(100.0, self.world.battery
                                     + self.config.recharge_per_tick)
            return
        if self.mode == "follow":
            user_cell = self.world.user.cell
            robot_cell = self.world.robot.cell
            if _distance(robot_cell, user_cell) <= 1.0:
                return
            # replan each tick toward the nearest passable neighbor of the user
            goals = [c for c in _neighbors(user_cell) if self.world.passable(c)]
            goals.sort(key=lambda c: (_distance(robot_cell, c), c))
            self._path = []
            for goal in goals:
                path = self.world.shortest_path(robot_cell, goal)
                if path is not None:
                    self._path = path
                    break
            if not self._path:
                return
        elif self.mode == "goto":
            if not self._path and self._target is not None:
                if self.world.robot.cell == self._target:
                    self._arrive()
                    return
                path = self.world.shortest_path(self.world.robot.cell, self._target)
                if path is None:
                    self._fail("unreachable")
                    return
                self._path = path
        else:
            return

        if self.world.battery <= 0:
            self._fail("battery")
            return

        self._budget += self.config.robot_speed
        moved = False
        while self._budget >= 1.0 and self._path:
            cell = self._path.pop(0)
            self.world.robot.x, self.world.robot.y = float(cell[0]), float(cell[1])
            self.world.battery = max(0.0, self.world.battery
                                     - self.config.battery_per_cell)
            self._budget -= 1.0
            moved = True
            if self.world.battery <= 0 and self._path:
                self._fail("battery")
                return
        if self.mode == "goto":
            if not self._path and self.world.robot.cell == self._target:
                self._arrive()
            elif moved:
                self.broker.publish("motion/progress", {
                    "x": self.world.robot.x, "y": self.world.robot.y,
                    "remaining": len(self._path)}, "cap:motion")

    def _arrive(self) -> None:
        self.broker.publish("motion/arrived", {
            "x": self.world.robot.x, "y": self.world.robot.y}, "cap:motion")
        self.stop()


def _neighbors(cell: Cell) -> List[Cell]:
    return [(cell[0], cell[1] - 1), (cell[0] - 1, cell[1]),
            (cell[0] + 1, cell[1]), (cell[0], cell[1] + 1)]


def _distance(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class SensorHub:
    """Perception: pose, user tracking, RFID tags, battery; mirrored into
    the KB every tick so conditions can reason over it."""

    MIRROR_SOURCE = "cap:sense"

    def __init__(self, world: GridWorld, kb: TripleStore, config: SimConfig,
                 prefixes: Optional[PrefixMap] = None):
        self.world = world
        self.kb = kb
        self.config = config
        self.prefixes = prefixes or PrefixMap()
        self._mirrored: List[Triple] = []

    def handle(self, op: str, args: Dict) -> Dict:
        if op == "report":
            return self.sense()
        raise UnknownOp(op)

    def sense(self) -> Dict:
        robot_cell = self.world.robot.cell
        user_cell = self.world.user.cell
        distance = round(_distance(robot_cell, user_cell), 3)
        visible = (distance <= self.config.camera_range
                   and self.world.line_of_sight(robot_cell, user_cell))
        tags = sorted(t["tag_id"] for t in self.world.tags
                      if _distance(robot_cell, t["cell"]) <= self.config.rfid_range)
        return {"robot": self.world.robot.to_dict(),
                "user": self.world.user.to_dict(),
                "user_distance": distance,
                "user_visible": visible,
                "tags_in_range": tags,
                "battery": round(self.world.battery, 3)}

    def _iri(self, curie: str) -> Iri:
        return Iri(self.prefixes.expand(curie))

    def mirror_triples(self, report: Dict) -> List[Triple]:
        def dec(value) -> Literal:
            return Literal(LiteralKind.DECIMAL, Decimal(str(value)))
        robot = self._iri("mario:robot")
        user = self._iri("mario:user")
        triples = [
            Triple(robot, self._iri("mario:x"), dec(report["robot"]["x"])),
            Triple(robot, self._iri("mario:y"), dec(report["robot"]["y"])),
            Triple(robot, self._iri("mario:batteryLevel"), dec(report["battery"])),
            Triple(user, self._iri("mario:x"), dec(report["user"]["x"])),
            Triple(user, self._iri("mario:y"), dec(report["user"]["y"])),
            Triple(user, self._iri("mario:distanceToRobot"),
                   dec(report["user_distance"])),
            Triple(user, self._iri("mario:visible"),
                   Literal(LiteralKind.BOOLEAN, report["user_visible"])),
        ]
        for tag_id in report["tags_in_range"]:
            triples.append(Triple(self._iri(f"mario:tag/{tag_id}"),
                                  self._iri("mario:inRange"),
                                  Literal(LiteralKind.BOOLEAN, True)))
        return triples

    def mirror(self) -> None:
        desired = self.mirror_triples(self.sense())
        stale = [t for t in self._mirrored if t not in desired]
        fresh = [t for t in desired if t not in self._mirrored]
        if stale or fresh:
            self.kb.mutate(add=fresh, remove=stale, source=self.MIRROR_SOURCE)
        self._mirrored = desired


class AutomaticLayer:
    """Owns the world and the basic capabilities; stepped once per tick
    before the deliberation cycle."""

    def __init__(self, broker: MessageBroker, kb: TripleStore, world: GridWorld,
                 config: Optional[SimConfig] = None,
                 registry: Optional[CapabilityRegistry] = None,
                 prefixes: Optional[PrefixMap] = None):
        self.broker = broker
        self.kb = kb
        self.world = world
        self.config = config or SimConfig()
        self.registry = registry or CapabilityRegistry()

        self._define_topics()
        self.speech = SpeechSynthesizer(broker, self.config)
        self.transcriber = SpeechTranscriber(broker, self.config)
        self.hci = HciManager(broker)
        self.motion = MotionController(broker, world, self.config)
        self.sensors = SensorHub(world, kb, self.config, prefixes)

        self.registry.register(CapabilityDescriptor("cap:t2s", ("speak",)),
                               self.speech.handle)
        self.registry.register(CapabilityDescriptor("cap:s2t", ("inject",)),
                               self.transcriber.handle)
        self.registry.register(CapabilityDescriptor("cap:hci", ("show", "hide")),
                               self.hci.handle)
        self.registry.register(
            CapabilityDescriptor("cap:motion",
                                 ("go_to", "stop", "follow_user", "recharge")),
            self.motion.handle)
        self.registry.register(CapabilityDescriptor("cap:sense", ("report",)),
                               self.sensors.handle)

    def _define_topics(self) -> None:
        schemas = self.broker.schemas
        schemas.define("Utterance", {"text": "string", "speaker_id": "string",
                                     "intent": {"type": "string", "required": False}})
        schemas.define("SpokenUtterance", {"text": "string",
                                           "duration_ticks": "integer"})
        schemas.define("SpeechDone", {"text": "string"})
        schemas.define("WidgetEvent", {"widget_id": "string", "action": "string"})
        schemas.define("MotionProgress", {"x": "number", "y": "number",
                                          "remaining": "integer"})
        schemas.define("MotionArrived", {"x": "number", "y": "number"})
        schemas.define("MotionFailed", {"reason": "string"})
        for name, schema in (("speech/in", "Utterance"),
                             ("speech/out", "SpokenUtterance"),
                             ("speech/done", "SpeechDone"),
                             ("hci/events", "WidgetEvent"),
                             ("motion/progress", "MotionProgress"),
                             ("motion/arrived", "MotionArrived"),
                             ("motion/failed", "MotionFailed")):
            self.broker.create_topic(name, schema)

    def move_user(self, x: float, y: float) -> None:
        cell = (int(round(x)), int(round(y)))
        if not self.world.in_bounds(cell):
            raise OutOfBounds(f"user target {cell} outside the grid")
        if cell in self.world.obstacles:
            raise TargetIsObstacle(f"user target {cell} is an obstacle")
        self.world.user.x, self.world.user.y = float(x), float(y)

    def step(self) -> None:
        self.motion.step()
        self.speech.step()
        self.sensors.mirror()
