"""Hot deployment: install / start / stop / update / uninstall bundles on a
running runtime, plus a directory watcher for file-drop deployment.

Bundles are declarative JSON documents (behavior bundles, scripted
capability modules, mapper ontologies), never native code, so deployment
needs no dynamic linking. Lifecycle effects requested by the watcher or the
gateway are queued and applied by the runtime between ticks; the engine's
tick counter is never touched, and a bundle's (de)registration never
disturbs another bundle's registrations.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import jsonschema

from deskbot.bus import MessageBroker
from deskbot.engine.manager import BehaviorEngine
from deskbot.engine.model import (
    behavior_from_json,
    goal_from_json,
    situation_from_json,
)
from deskbot.errors import (
    BundleUnknown,
    DeskbotError,
    DuplicateVersion,
    IllegalTransition,
    ParseError,
    UnresolvedRequires,
    VersionNotNewer,
)
from deskbot.kb.store import TripleStore
from deskbot.kb.terms import Iri, PrefixMap, Triple
from deskbot.kb.textio import parse_document
from deskbot.mapper import MapperManager
from deskbot.world import CapabilityDescriptor, CapabilityRegistry

_SCHEMA_PATH = Path(__file__).resolve().parent / "resources" / "bundle.schema.json"
_BUNDLE_SCHEMA = json.loads(_SCHEMA_PATH.read_text())

DEPLOY_TOPIC = "deploy/events"


class ComponentState(Enum):
    INSTALLED = "Installed"
    STARTED = "Started"
    STOPPED = "Stopped"
    UNINSTALLED = "Uninstalled"


def parse_version(text: str) -> Tuple[int, int, int]:
    parts = text.split(".")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise ParseError(f"bad version {text!r} (want MAJOR.MINOR.PATCH)")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


@dataclass
class BundleRecord:
    bundle_id: str
    version: Tuple[int, int, int]
    kind: str
    doc: Dict
    state: ComponentState
    autostart: bool
    requires: List[str]
    unresolved: List[str] = field(default_factory=list)
    mapper_module: Optional[str] = None
    ontology_triples: List[Triple] = field(default_factory=list)

    def view(self) -> Dict:
        return {"bundle_id": self.bundle_id,
                "version": ".".join(str(v) for v in self.version),
                "kind": self.kind, "state": self.state.value,
                "autostart": self.autostart,
                "requires": list(self.requires),
                "unresolved": list(self.unresolved)}


class DeployManager:
    def __init__(self, engine: BehaviorEngine, mappers: MapperManager,
                 capabilities: CapabilityRegistry, broker: MessageBroker,
                 kb: TripleStore, prefixes: Optional[PrefixMap] = None):
        self.engine = engine
        self.mappers = mappers
        self.capabilities = capabilities
        self.broker = broker
        self.kb = kb
        self.prefixes = prefixes or PrefixMap()
        self._bundles: Dict[str, BundleRecord] = {}
        self.broker.schemas.define("DeployEvent", {
            "bundle_id": "string", "event": "string",
            "detail": {"type": "string", "required": False}})
        self.broker.create_topic(DEPLOY_TOPIC, "DeployEvent")

    def _event(self, bundle_id: str, event: str, detail: str = "") -> None:
        payload = {"bundle_id": bundle_id, "event": event}
        if detail:
            payload["detail"] = detail
        self.broker.publish(DEPLOY_TOPIC, payload, "hot-deploy")

    # -- document handling ------------------------------------------------------

    @staticmethod
    def parse_bundle(doc_or_path) -> Dict:
        if isinstance(doc_or_path, (str, Path)):
            try:
                text = Path(doc_or_path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ParseError(f"cannot read bundle: {exc}") from None
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bundle is not valid JSON: {exc}") from None
        else:
            doc = doc_or_path
        if _BUNDLE_SCHEMA is not None:
            try:
                jsonschema.validate(doc, _BUNDLE_SCHEMA)
            except jsonschema.ValidationError as exc:
                raise ParseError(f"bundle schema violation: {exc.message}") from None
        kind = doc["bundle"].get("kind", "behavior")
        if kind == "capability" and "capability" not in doc:
            raise ParseError("capability bundle needs a 'capability' section")
        if kind == "mapper" and "ontology" not in doc:
            raise ParseError("mapper bundle needs an 'ontology' document")
        parse_version(doc["bundle"]["version"])
        return doc

    def _resolve_requires(self, requires: List[str]) -> List[str]:
        unresolved = []
        for item in requires:
            if item.startswith("schema:"):
                if item.split(":", 1)[1] not in self.broker.schemas:
                    unresolved.append(item)
            elif not self.capabilities.has(item):
                unresolved.append(item)
        return unresolved

    # -- lifecycle ----------------------------------------------------------------

    def install(self, doc_or_path) -> str:
        doc = self.parse_bundle(doc_or_path)
        manifest = doc["bundle"]
        bundle_id = manifest["id"]
        version = parse_version(manifest["version"])
        existing = self._bundles.get(bundle_id)
        if existing is not None and existing.state != ComponentState.UNINSTALLED:
            raise DuplicateVersion(
                f"{bundle_id} {'.'.join(map(str, existing.version))} already "
                "installed (use update)")
        record = BundleRecord(
            bundle_id=bundle_id, version=version,
            kind=manifest.get("kind", "behavior"), doc=doc,
            state=ComponentState.INSTALLED,
            autostart=manifest.get("autostart", True),
            requires=list(manifest.get("requires", [])))
        record.unresolved = self._resolve_requires(record.requires)
        self._bundles[bundle_id] = record
        self._event(bundle_id, "installed",
                    "unresolved: " + ",".join(record.unresolved)
                    if record.unresolved else "")
        return bundle_id

    def _require(self, bundle_id: str) -> BundleRecord:
        record = self._bundles.get(bundle_id)
        if record is None or record.state == ComponentState.UNINSTALLED:
            raise BundleUnknown(bundle_id)
        return record

    def start(self, bundle_id: str) -> None:
        record = self._require(bundle_id)
        if record.state not in (ComponentState.INSTALLED, ComponentState.STOPPED):
            raise IllegalTransition(f"{bundle_id}: {record.state.value} -> Started")
        record.unresolved = self._resolve_requires(record.requires)
        if record.unresolved:
            raise UnresolvedRequires(
                f"{bundle_id}: unresolved {', '.join(record.unresolved)}")
        self._register(record)
        record.state = ComponentState.STARTED
        self._event(bundle_id, "started")

    def stop(self, bundle_id: str) -> None:
        record = self._require(bundle_id)
        if record.state != ComponentState.STARTED:
            raise IllegalTransition(f"{bundle_id}: {record.state.value} -> Stopped")
        self._deregister(record)
        record.state = ComponentState.STOPPED
        self._event(bundle_id, "stopped")

    def uninstall(self, bundle_id: str) -> None:
        record = self._require(bundle_id)
        if record.state == ComponentState.STARTED:
            raise IllegalTransition(f"{bundle_id}: stop before uninstall")
        record.state = ComponentState.UNINSTALLED
        del self._bundles[bundle_id]
        self._event(bundle_id, "uninstalled")

    def update(self, bundle_id: str, doc_or_path) -> str:
        """stop-old, install-new, start-new as one quiescent-point action."""
        record = self._require(bundle_id)
        doc = self.parse_bundle(doc_or_path)
        manifest = doc["bundle"]
        if manifest["id"] != bundle_id:
            raise ParseError(f"update document is for {manifest['id']!r}, "
                             f"not {bundle_id!r}")
        new_version = parse_version(manifest["version"])
        if new_version <= record.version:
            raise VersionNotNewer(
                f"{bundle_id}: {manifest['version']} <= "
                f"{'.'.join(map(str, record.version))}")
        was_started = record.state == ComponentState.STARTED
        if was_started:
            self._deregister(record)
        record.version = new_version
        record.kind = manifest.get("kind", "behavior")
        record.doc = doc
        record.autostart = manifest.get("autostart", True)
        record.requires = list(manifest.get("requires", []))
        record.state = ComponentState.INSTALLED
        if was_started or record.autostart:
            self.start(bundle_id)
        self._event(bundle_id, "updated", manifest["version"])
        return bundle_id

    # -- registration against target modules -----------------------------------------

    def _register(self, record: BundleRecord) -> None:
        doc = record.doc
        for schema_doc in doc.get("schemas", []):
            self.broker.schemas.define(schema_doc["schema_id"], schema_doc["fields"])
        if record.kind == "capability":
            cap = doc["capability"]
            results = {op["name"]: op.get("result", {}) for op in cap["ops"]}
            descriptor = CapabilityDescriptor(
                cap["capability_id"], tuple(sorted(results)),
                provider=record.bundle_id)

            def scripted_handler(op, args, _results=results):
                return dict(_results.get(op, {}))

            self.capabilities.register(descriptor, scripted_handler)
            return
        if record.kind == "mapper":
            mapper = self.mappers.generate_from_document(
                doc["ontology"], source=f"bundle:{record.bundle_id}")
            record.mapper_module = mapper.module_id
            return
        # behavior bundle
        if doc.get("ontology"):
            triples, _ = parse_document(doc["ontology"], self.prefixes)
            result = self.kb.mutate(add=triples,
                                    source=f"bundle:{record.bundle_id}")
            record.ontology_triples = result.added
        default_priority = doc["bundle"].get("priority_default", 50)
        owner = record.bundle_id
        for goal_doc in doc.get("goals", []):
            goal_doc = dict(goal_doc)
            goal_doc.setdefault("priority", default_priority)
            self.engine.register_goal(goal_from_json(goal_doc, self.prefixes), owner)
        for sit_doc in doc.get("situations", []):
            self.engine.register_situation(
                situation_from_json(sit_doc, self.prefixes), owner)
        for aff_doc in doc.get("affordances", []):
            self.engine.register_affordance(
                Iri(self.prefixes.expand(aff_doc["situation"])),
                Iri(self.prefixes.expand(aff_doc["goal"])), owner)
        for beh_doc in doc.get("behaviors", []):
            self.engine.register_behavior(
                behavior_from_json(beh_doc, self.prefixes), owner=owner)

    def _deregister(self, record: BundleRecord) -> None:
        if record.kind == "capability":
            self.capabilities.deregister(record.doc["capability"]["capability_id"])
            return
        if record.kind == "mapper":
            if record.mapper_module:
                self.mappers.drop(record.mapper_module)
                record.mapper_module = None
            return
        self.engine.deregister_owner(record.bundle_id)
        still = [t for t in record.ontology_triples if self.kb.has_asserted(t)]
        if still:
            self.kb.mutate(remove=still, source=f"bundle:{record.bundle_id}")
        record.ontology_triples = []

    # -- views --------------------------------------------------------------------------

    def list_bundles(self) -> List[Dict]:
        return [self._bundles[bid].view() for bid in sorted(self._bundles)]

    def state_of(self, bundle_id: str) -> Optional[ComponentState]:
        record = self._bundles.get(bundle_id)
        return record.state if record else None

    def registrations(self) -> Dict[str, List[str]]:
        """Registration keys per bundle, for registry-diff checks."""
        out: Dict[str, List[str]] = {}
        for bundle_id, record in sorted(self._bundles.items()):
            keys = list(self.engine.registration_keys(bundle_id))
            if record.kind == "capability" and record.state == ComponentState.STARTED:
                keys.append("capability:" + record.doc["capability"]["capability_id"])
            if record.mapper_module:
                keys.append("mapper:" + record.mapper_module)
            out[bundle_id] = sorted(keys)
        return out


class DirectoryWatcher:
    """File-drop deployment: new or changed ``*.bundle.json`` files install
    or update bundles. A bad file raises nothing past the watcher; it only
    produces a deploy error event."""

    def __init__(self, manager: DeployManager, directory):
        self.manager = manager
        self.directory = Path(directory)
        self._seen: Dict[str, str] = {}        # path -> content hash

    def scan(self) -> List[Tuple[str, str]]:
        """One pass over the directory; returns [(action, bundle_id/path)]."""
        actions: List[Tuple[str, str]] = []
        if not self.directory.is_dir():
            return actions
        for path in sorted(self.directory.glob("*.bundle.json")):
            try:
                content = path.read_text(encoding="utf-8")
            except OSError:
                continue
            digest = hashlib.sha256(content.encode()).hexdigest()
            if self._seen.get(str(path)) == digest:
                continue
            self._seen[str(path)] = digest
            try:
                doc = self.manager.parse_bundle(path)
                bundle_id = doc["bundle"]["id"]
                if self.manager.state_of(bundle_id) is None:
                    self.manager.install(doc)
                    if doc["bundle"].get("autostart", True):
                        self.manager.start(bundle_id)
                    actions.append(("installed", bundle_id))
                else:
                    self.manager.update(bundle_id, doc)
                    actions.append(("updated", bundle_id))
            except DeskbotError as exc:
                self.manager._event(path.name, "error",
                                    f"{type(exc).__name__}: {exc}")
                actions.append(("error", str(path)))
        return actions
