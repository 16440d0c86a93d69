"""In-process typed publish/subscribe broker.

N-to-N channels ("topics") carrying schema-checked record payloads. Delivery
is pull-based: subscribers own a cursor and poll; this keeps the deliberation
loop deterministic and lets the gateway adapt poll to push for its WebSocket
stream.

Retention per topic is a bounded ring (default 4096). A subscription whose
cursor falls behind the ring is repositioned to the earliest retained
envelope and receives a `Lagged` error once, so overflow is always explicit.
"""

from __future__ import annotations

import json
import re
import threading
from collections import deque
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from deskbot.errors import (
    DuplicateSubscriber,
    Lagged,
    MalformedName,
    SchemaConflict,
    SchemaUnknown,
    SchemaViolation,
    SubscriptionUnknown,
    TopicUnknown,
)

_SEGMENT = re.compile(r"^[A-Za-z0-9_.-]+$")

# Primitive type tags accepted in schema field declarations.
_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "object": lambda v: isinstance(v, dict),
    "array": lambda v: isinstance(v, list),
    "any": lambda v: True,
}


@dataclass(frozen=True)
class FieldSpec:
    type: str = "any"
    required: bool = True


@dataclass(frozen=True)
class MessageSchema:
    """Named structured-record definition: field name -> (type, required)."""

    schema_id: str
    fields: Tuple[Tuple[str, FieldSpec], ...]

    @classmethod
    def define(cls, schema_id: str, fields: Dict[str, Any]) -> "MessageSchema":
        """Build from {name: "type"} or {name: {"type":..,"required":..}}."""
        specs = []
        for name, spec in sorted(fields.items()):
            if isinstance(spec, str):
                specs.append((name, FieldSpec(type=spec)))
            else:
                specs.append((name, FieldSpec(type=spec.get("type", "any"),
                                              required=spec.get("required", True))))
        return cls(schema_id=schema_id, fields=tuple(specs))

    def validate(self, payload: Any) -> None:
        if not isinstance(payload, dict):
            raise SchemaViolation(f"{self.schema_id}: payload must be a record")
        declared = dict(self.fields)
        for name, spec in self.fields:
            if name not in payload:
                if spec.required:
                    raise SchemaViolation(f"{self.schema_id}: missing field {name!r}")
                continue
            check = _CHECKS.get(spec.type)
            if check is None:
                raise SchemaViolation(f"{self.schema_id}: unknown type {spec.type!r}")
            if not check(payload[name]):
                raise SchemaViolation(
                    f"{self.schema_id}: field {name!r} is not a {spec.type}")
        for name in payload:
            if name not in declared:
                raise SchemaViolation(f"{self.schema_id}: undeclared field {name!r}")


class SchemaRegistry:
    """Registry of message schemas, filled at startup and by bundles."""

    def __init__(self):
        self._schemas: Dict[str, MessageSchema] = {}
        self._lock = threading.Lock()

    def register(self, schema: MessageSchema) -> None:
        with self._lock:
            existing = self._schemas.get(schema.schema_id)
            if existing is not None and existing != schema:
                raise SchemaConflict(f"schema {schema.schema_id!r} already "
                                     "registered with a different definition")
            self._schemas[schema.schema_id] = schema

    def define(self, schema_id: str, fields: Dict[str, Any]) -> MessageSchema:
        schema = MessageSchema.define(schema_id, fields)
        self.register(schema)
        return schema

    def get(self, schema_id: str) -> MessageSchema:
        try:
            return self._schemas[schema_id]
        except KeyError:
            raise SchemaUnknown(f"no schema registered under {schema_id!r}") from None

    def __contains__(self, schema_id: str) -> bool:
        return schema_id in self._schemas

    def ids(self) -> List[str]:
        return sorted(self._schemas)


@dataclass(frozen=True)
class Envelope:
    topic: str
    seq: int            # per-topic, 1-based, gap-free
    global_seq: int     # broker-wide publish index, for trace export ordering
    timestamp: int      # logical tick at publish time
    publisher_id: str
    payload: Dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(
            {"g": self.global_seq, "topic": self.topic, "seq": self.seq,
             "tick": self.timestamp, "publisher": self.publisher_id,
             "payload": self.payload},
            sort_keys=True, separators=(",", ":"))


@dataclass
class Subscription:
    subscriber_id: str
    topic: str
    cursor: int = 0


class _TopicState:
    def __init__(self, name: str, schema_id: str, retention: int):
        self.name = name
        self.schema_id = schema_id
        self.ring: deque = deque(maxlen=retention)
        self.next_seq = 1

    @property
    def max_seq(self) -> int:
        return self.next_seq - 1

    @property
    def earliest_retained(self) -> int:
        return self.ring[0].seq if self.ring else self.next_seq


class MessageBroker:
    """The semantic bus: topics, publishing, and cursor-based delivery."""

    def __init__(self, schemas: Optional[SchemaRegistry] = None,
                 retention: int = 4096, clock=None):
        self.schemas = schemas if schemas is not None else SchemaRegistry()
        self._retention = retention
        self._clock = clock
        self._topics: Dict[str, _TopicState] = {}
        self._subs: Dict[Tuple[str, str], Subscription] = {}
        self._log: List[Envelope] = []
        self._lock = threading.RLock()

    # -- topic management ---------------------------------------------------

    def create_topic(self, name: str, schema_id: str) -> _TopicState:
        segments = name.split("/")
        if not name or not all(_SEGMENT.match(s) for s in segments):
            raise MalformedName(f"bad topic name {name!r}")
        with self._lock:
            if schema_id not in self.schemas:
                raise SchemaUnknown(f"topic {name!r}: schema {schema_id!r} not registered")
            existing = self._topics.get(name)
            if existing is not None:
                if existing.schema_id != schema_id:
                    raise SchemaConflict(
                        f"topic {name!r} exists with schema {existing.schema_id!r}")
                return existing
            topic = _TopicState(name, schema_id, self._retention)
            self._topics[name] = topic
            return topic

    def has_topic(self, name: str) -> bool:
        return name in self._topics

    def topic_names(self) -> List[str]:
        return sorted(self._topics)

    def _topic(self, name: str) -> _TopicState:
        try:
            return self._topics[name]
        except KeyError:
            raise TopicUnknown(f"no topic {name!r}") from None

    # -- publish / subscribe / poll ------------------------------------------

    def publish(self, topic: str, payload: Dict[str, Any], publisher_id: str) -> int:
        with self._lock:
            state = self._topic(topic)
            self.schemas.get(state.schema_id).validate(payload)
            tick = self._clock.tick if self._clock is not None else 0
            env = Envelope(topic=topic, seq=state.next_seq,
                           global_seq=len(self._log) + 1, timestamp=tick,
                           publisher_id=publisher_id, payload=payload)
            state.next_seq += 1
            state.ring.append(env)
            self._log.append(env)
            return env.seq

    def subscribe(self, topic: str, subscriber_id: str,
                  from_: str = "earliest") -> Subscription:
        with self._lock:
            state = self._topic(topic)
            key = (topic, subscriber_id)
            if key in self._subs:
                raise DuplicateSubscriber(
                    f"{subscriber_id!r} already subscribed to {topic!r}")
            cursor = 0 if from_ == "earliest" else state.max_seq
            sub = Subscription(subscriber_id=subscriber_id, topic=topic, cursor=cursor)
            self._subs[key] = sub
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            self._subs.pop((sub.topic, sub.subscriber_id), None)

    def poll(self, sub: Subscription, max_envelopes: int = 256) -> List[Envelope]:
        with self._lock:
            if self._subs.get((sub.topic, sub.subscriber_id)) is not sub:
                raise SubscriptionUnknown(
                    f"{sub.subscriber_id!r} has no live subscription on {sub.topic!r}")
            state = self._topic(sub.topic)
            earliest = state.earliest_retained
            if sub.cursor < earliest - 1:
                dropped = earliest - 1 - sub.cursor
                sub.cursor = earliest - 1
                raise Lagged(
                    f"{sub.subscriber_id!r} lagged {dropped} envelopes on "
                    f"{sub.topic!r}; repositioned to earliest retained", dropped)
            out = []
            for env in state.ring:
                if env.seq > sub.cursor:
                    out.append(env)
                    if len(out) >= max_envelopes:
                        break
            if out:
                sub.cursor = out[-1].seq
            return out

    # -- trace export ---------------------------------------------------------

    def publish_log(self) -> List[Envelope]:
        with self._lock:
            return list(self._log)

    def export_ndjson(self) -> str:
        """Full publish log, one JSON object per line, in publish order."""
        return "".join(env.to_json() + "\n" for env in self.publish_log())
