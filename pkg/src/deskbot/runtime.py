"""Runtime composition: wires clock, bus, KB, simulated capabilities,
behavior engine, mappers, and hot deploy into one tick-stepped system.

Tick order (fixed, so identical inputs give identical traces):

  1. watcher scan (every ``scan_interval_ticks``)
  2. queued operator commands (journaled at acceptance, applied here)
  3. scenario actions scheduled for this tick
  4. automatic layer step (motion, speech, sensor mirror)
  5. deliberation cycle (engine.tick, which advances the clock)
  6. state frame emission

Operator commands are validated and journaled before execution and applied
only at tick boundaries, so a state frame never shows a half-applied
command. The full publish log doubles as the run trace; replaying a journal
plus scenario into a fresh runtime reproduces it byte for byte.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from deskbot.bus import MessageBroker, SchemaRegistry
from deskbot.clock import LogicalClock
from deskbot.deploy import DeployManager, DirectoryWatcher
from deskbot.engine import BehaviorEngine
from deskbot.errors import (
    CommandValidationError,
    ConfigInvalid,
    DeskbotError,
    ParseError,
    UnknownTarget,
)
from deskbot.kb.store import TripleStore
from deskbot.kb.terms import (
    PrefixMap,
    Triple,
    Variable,
    format_term,
    parse_term,
    term_key,
)
from deskbot.mapper import MapperManager
from deskbot.world import AutomaticLayer, GridWorld, SimConfig

COMMAND_KINDS = ("inject_utterance", "press_widget", "move_user", "set_clock",
                 "force_goal", "force_terminate", "force_suspend",
                 "force_resume", "kb_assert", "kb_retract", "deploy_op")

SCENARIO_ACTIONS = ("publish", "assert", "retract", "clock_set",
                    "inject_utterance", "press_widget", "move_user",
                    "force_goal", "force_terminate", "force_suspend",
                    "force_resume", "deploy_op")


@dataclass
class RuntimeConfig:
    tick_ms: int = 100
    seconds_per_tick: int = 60
    time_of_day: str = "08:00"
    retention: int = 4096
    scan_interval_ticks: int = 5
    frame_envelopes: int = 50
    intent_keywords: Dict[str, str] = field(default_factory=lambda: {
        "music": "play_music", "pill": "remind_pills", "news": "read_news"})
    prefixes: Dict[str, str] = field(default_factory=dict)
    robot_speed: float = 1.0
    rfid_range: float = 3.0
    camera_range: float = 8.0

    @classmethod
    def from_dict(cls, doc: Dict) -> "RuntimeConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(doc) - known
        if bad:
            raise ConfigInvalid(f"unknown config keys: {sorted(bad)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: Optional[str] = None) -> "RuntimeConfig":
        """Explicit path, else the RUNTIME_CONFIG env var, else defaults."""
        path = path or os.environ.get("RUNTIME_CONFIG")
        if not path:
            return cls()
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot load config {path!r}: {exc}") from None
        return cls.from_dict(doc)


@dataclass
class JournalEntry:
    index: int
    kind: str
    args: Dict
    operator_id: str
    issued_tick: int
    status: str = "accepted"          # accepted | rejected | applied | failed
    applied_tick: Optional[int] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict:
        out = {"index": self.index, "kind": self.kind, "args": self.args,
               "operator_id": self.operator_id, "issued_tick": self.issued_tick,
               "status": self.status}
        if self.applied_tick is not None:
            out["applied_tick"] = self.applied_tick
        if self.error:
            out["error"] = self.error
        return out


class Runtime:
    def __init__(self, world_doc: Dict, config: Optional[RuntimeConfig] = None,
                 bundles_dir: Optional[str] = None):
        self.config = config or RuntimeConfig()
        self.clock = LogicalClock(seconds_per_tick=self.config.seconds_per_tick,
                                  time_of_day=self.config.time_of_day)
        self.prefixes = PrefixMap(self.config.prefixes or None)
        self.broker = MessageBroker(schemas=SchemaRegistry(),
                                    retention=self.config.retention,
                                    clock=self.clock)
        self.kb = TripleStore()

        self.broker.schemas.define("KbChange", {
            "version": "integer", "added": "array", "removed": "array"})
        self.broker.create_topic("kb/changes", "KbChange")
        self.kb.on_change(self._publish_kb_change)

        world = GridWorld.from_dict(world_doc)
        sim = SimConfig(robot_speed=self.config.robot_speed,
                        rfid_range=self.config.rfid_range,
                        camera_range=self.config.camera_range,
                        intent_keywords=dict(self.config.intent_keywords))
        self.layer = AutomaticLayer(self.broker, self.kb, world, sim,
                                    prefixes=self.prefixes)
        self.world = world
        self.engine = BehaviorEngine(self.kb, self.broker, self.layer.registry,
                                     self.clock, self.prefixes)
        self.mappers = MapperManager(self.kb, self.prefixes)
        self.deploy = DeployManager(self.engine, self.mappers,
                                    self.layer.registry, self.broker, self.kb,
                                    self.prefixes)
        self.watcher = DirectoryWatcher(self.deploy, bundles_dir) \
            if bundles_dir else None

        self._queue: List[JournalEntry] = []
        self._queue_lock = threading.Lock()
        self._applied_events: Dict[int, threading.Event] = {}
        self.journal: List[JournalEntry] = []
        self._scenario: Dict[int, List[Dict]] = {}
        self._scenario_horizon = 0
        self.latest_frame: Optional[Dict] = None
        self._frame_listeners: List[Callable[[Dict], None]] = []
        self._loop_thread: Optional[threading.Thread] = None
        self._stop = threading.Event()

    # -- kb change fan-out ---------------------------------------------------------

    def _publish_kb_change(self, result) -> None:
        def render(triples: Sequence[Triple]) -> List[str]:
            ordered = sorted(triples, key=lambda t: (term_key(t.s), term_key(t.p),
                                                     term_key(t.o)))
            return [f"{format_term(t.s, self.prefixes)} "
                    f"{format_term(t.p, self.prefixes)} "
                    f"{format_term(t.o, self.prefixes)}" for t in ordered]
        self.broker.publish("kb/changes", {
            "version": result.version,
            "added": render(result.added),
            "removed": render(result.removed)}, "knowledge-base")

    # -- startup ----------------------------------------------------------------------

    def load_bundles(self) -> None:
        """Initial bundle sweep (install + start-if-autostart)."""
        if self.watcher is not None:
            self.watcher.scan()

    # -- operator commands ----------------------------------------------------------

    def _validate_command(self, kind: str, args: Dict) -> None:
        if kind not in COMMAND_KINDS:
            raise CommandValidationError(f"unknown command kind {kind!r}")
        if kind == "inject_utterance":
            if not isinstance(args.get("text"), str) or not args["text"]:
                raise CommandValidationError("inject_utterance needs text")
        elif kind == "press_widget":
            if not args.get("widget_id"):
                raise CommandValidationError("press_widget needs widget_id")
        elif kind == "move_user":
            if not all(isinstance(args.get(k), (int, float)) for k in ("x", "y")):
                raise CommandValidationError("move_user needs numeric x and y")
        elif kind == "set_clock":
            from deskbot.clock import parse_hhmm
            try:
                parse_hhmm(str(args.get("time", "")))
            except ParseError as exc:
                raise CommandValidationError(str(exc)) from None
        elif kind == "force_goal":
            if not args.get("goal"):
                raise CommandValidationError("force_goal needs goal")
        elif kind in ("kb_assert", "kb_retract"):
            try:
                self._parse_triple(args)
            except DeskbotError as exc:
                raise CommandValidationError(f"bad triple: {exc}") from None
        elif kind == "deploy_op":
            if args.get("op") not in ("install", "start", "stop", "update",
                                      "uninstall"):
                raise CommandValidationError("deploy_op needs a valid op")

    def _parse_triple(self, args: Dict) -> Triple:
        terms = [parse_term(str(args[k]), self.prefixes) for k in ("s", "p", "o")]
        if any(isinstance(t, Variable) for t in terms):
            raise CommandValidationError("triple must be ground")
        return Triple(*terms)

    def submit_command(self, kind: str, args: Optional[Dict] = None,
                       operator_id: str = "operator") -> JournalEntry:
        """Validate, journal, and queue a command for the next tick."""
        args = args or {}
        entry = JournalEntry(index=len(self.journal), kind=kind, args=args,
                             operator_id=operator_id,
                             issued_tick=self.clock.tick)
        try:
            self._validate_command(kind, args)
        except CommandValidationError as exc:
            entry.status = "rejected"
            entry.error = str(exc)
            self.journal.append(entry)
            raise
        self.journal.append(entry)
        with self._queue_lock:
            self._queue.append(entry)
            self._applied_events[entry.index] = threading.Event()
        return entry

    def wait_applied(self, entry: JournalEntry, timeout: float = 5.0) -> bool:
        event = self._applied_events.get(entry.index)
        if event is None:
            return entry.status in ("applied", "failed")
        return event.wait(timeout)

    def _apply_command(self, entry: JournalEntry) -> None:
        args = entry.args
        try:
            kind = entry.kind
            if kind == "inject_utterance":
                self.layer.transcriber.inject(args["text"],
                                              args.get("speaker_id", "user"))
            elif kind == "press_widget":
                if not self.layer.hci.press(args["widget_id"],
                                            args.get("action", "press")):
                    raise UnknownTarget(f"widget {args['widget_id']!r} not shown")
            elif kind == "move_user":
                self.layer.move_user(float(args["x"]), float(args["y"]))
            elif kind == "set_clock":
                self.clock.set_time(args["time"])
            elif kind == "force_goal":
                self.engine.force_activate(args["goal"])
            elif kind == "force_terminate":
                self.engine.force_terminate()
            elif kind == "force_suspend":
                self.engine.force_suspend()
            elif kind == "force_resume":
                self.engine.force_resume()
            elif kind == "kb_assert":
                self.kb.mutate(add=[self._parse_triple(args)],
                               source=f"operator:{entry.operator_id}")
            elif kind == "kb_retract":
                self.kb.mutate(remove=[self._parse_triple(args)],
                               source=f"operator:{entry.operator_id}")
            elif kind == "deploy_op":
                self._apply_deploy_op(args)
            entry.status = "applied"
        except DeskbotError as exc:
            entry.status = "failed"
            entry.error = f"{type(exc).__name__}: {exc}"
        entry.applied_tick = self.clock.tick
        event = self._applied_events.pop(entry.index, None)
        if event is not None:
            event.set()

    def _apply_deploy_op(self, args: Dict) -> None:
        op = args["op"]
        if op in ("install", "update"):
            doc = args.get("document")
            if doc is None and args.get("path"):
                doc = self.deploy.parse_bundle(args["path"])
            if doc is None:
                raise CommandValidationError(f"deploy {op} needs document or path")
            if op == "install":
                bundle_id = self.deploy.install(doc)
                if args.get("start"):
                    self.deploy.start(bundle_id)
            else:
                self.deploy.update(args.get("bundle_id")
                                   or doc["bundle"]["id"], doc)
        else:
            getattr(self.deploy, op)(args["bundle_id"])

    # -- scenario -----------------------------------------------------------------------

    def load_scenario(self, actions: Sequence[Dict]) -> None:
        for action in actions:
            if action.get("action") not in SCENARIO_ACTIONS:
                raise ParseError(f"unknown scenario action: {action}")
            tick = int(action.get("tick", 0))
            self._scenario.setdefault(tick, []).append(action)
            self._scenario_horizon = max(self._scenario_horizon, tick)

    def load_scenario_file(self, path: str) -> None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot load scenario {path!r}: {exc}") from None
        self.load_scenario(doc)

    @property
    def scenario_horizon(self) -> int:
        return self._scenario_horizon

    def _apply_scenario_action(self, action: Dict) -> None:
        kind = action["action"]
        args = action.get("args", {})
        if kind == "publish":
            self.broker.publish(args["topic"], args.get("payload", {}),
                                args.get("publisher_id", "scenario"))
        elif kind == "assert":
            self.kb.mutate(add=[self._parse_triple(args)], source="scenario")
        elif kind == "retract":
            self.kb.mutate(remove=[self._parse_triple(args)], source="scenario")
        elif kind == "clock_set":
            self.clock.set_time(args["time"])
        elif kind == "inject_utterance":
            self.layer.transcriber.inject(args["text"],
                                          args.get("speaker_id", "user"))
        elif kind == "press_widget":
            self.layer.hci.press(args["widget_id"], args.get("action", "press"))
        elif kind == "move_user":
            self.layer.move_user(float(args["x"]), float(args["y"]))
        elif kind == "force_goal":
            self.engine.force_activate(args["goal"])
        elif kind == "force_terminate":
            self.engine.force_terminate()
        elif kind == "force_suspend":
            self.engine.force_suspend()
        elif kind == "force_resume":
            self.engine.force_resume()
        elif kind == "deploy_op":
            self._apply_deploy_op(args)

    # -- the tick -------------------------------------------------------------------------

    def tick(self) -> Dict:
        now = self.clock.tick
        if self.watcher is not None and self.config.scan_interval_ticks > 0 \
                and now % self.config.scan_interval_ticks == 0:
            self.watcher.scan()
        with self._queue_lock:
            pending, self._queue = self._queue, []
        for entry in pending:
            self._apply_command(entry)
        for action in self._scenario.get(now, []):
            try:
                self._apply_scenario_action(action)
            except DeskbotError as exc:
                self.broker.publish("behavior/warnings", {
                    "kind": "scenario_error",
                    "detail": f"tick {now}: {type(exc).__name__}: {exc}"},
                    "scenario")
        self.layer.step()
        report = self.engine.tick()
        frame = self._build_frame(now, report)
        self.latest_frame = frame
        for listener in list(self._frame_listeners):
            listener(frame)
        return frame

    def run_ticks(self, n: int) -> None:
        for _ in range(n):
            self.tick()

    def _build_frame(self, tick: int, report) -> Dict:
        active = self.engine.active_instance
        recent = self.broker.publish_log()[-self.config.frame_envelopes:]
        return {
            "tick": tick,
            "time_of_day": self.clock.time_of_day,
            "active": active.summary() if active else None,
            "suspended": [i.summary() for i in self.engine.suspended_instances],
            "report": report.to_dict(),
            "world": {
                "robot": self.world.robot.to_dict(),
                "user": self.world.user.to_dict(),
                "battery": round(self.world.battery, 3),
                "widgets": self.layer.hci.widgets(),
            },
            "bundles": self.deploy.list_bundles(),
            "envelopes": [json.loads(e.to_json()) for e in recent],
            "journal_len": len(self.journal),
        }

    def on_frame(self, listener: Callable[[Dict], None]) -> None:
        self._frame_listeners.append(listener)

    # -- live loop ----------------------------------------------------------------------

    def start_loop(self) -> None:
        if self._loop_thread is not None:
            return
        self._stop.clear()

        def loop():
            import time
            while not self._stop.is_set():
                started = time.monotonic()
                self.tick()
                elapsed = time.monotonic() - started
                delay = max(0.0, self.config.tick_ms / 1000.0 - elapsed)
                self._stop.wait(delay)

        self._loop_thread = threading.Thread(target=loop, daemon=True,
                                             name="deskbot-loop")
        self._loop_thread.start()

    def stop_loop(self) -> None:
        self._stop.set()
        if self._loop_thread is not None:
            self._loop_thread.join(timeout=5)
            self._loop_thread = None

    # -- traces, journals, replay ---------------------------------------------------------

    def trace_ndjson(self) -> str:
        return self.broker.export_ndjson()

    def journal_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.journal], indent=2,
                          sort_keys=True) + "\n"

    def record(self, out_dir: str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.ndjson").write_text(self.trace_ndjson(), encoding="utf-8")
        (out / "journal.json").write_text(self.journal_json(), encoding="utf-8")


def replay(world_doc: Dict, config: RuntimeConfig,
           bundles_dir: Optional[str] = None,
           scenario: Optional[Sequence[Dict]] = None,
           journal: Optional[Sequence[Dict]] = None,
           ticks: Optional[int] = None) -> Runtime:
    """Deterministically re-execute a run from its inputs.

    Journal commands are re-applied at their recorded application ticks.
    Rejected and failed entries are skipped: they had no effect on the
    original run's trace."""
    runtime = Runtime(world_doc, config, bundles_dir)
    runtime.load_bundles()
    if scenario:
        runtime.load_scenario(scenario)
    horizon = runtime.scenario_horizon
    if journal:
        for entry in journal:
            if entry.get("status") != "applied" or "applied_tick" not in entry:
                continue
            runtime.load_scenario([{"tick": entry["applied_tick"],
                                    "action": _journal_to_action(entry["kind"]),
                                    "args": entry["args"]}])
            horizon = max(horizon, entry["applied_tick"])
    runtime.run_ticks(ticks if ticks is not None else horizon + 10)
    return runtime


def _journal_to_action(kind: str) -> str:
    mapping = {"kb_assert": "assert", "kb_retract": "retract",
               "set_clock": "clock_set"}
    return mapping.get(kind, kind)
