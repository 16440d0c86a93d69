"""Bundle lifecycle: install/start/stop/update/uninstall semantics, the
registry-diff confinement property, and directory watching."""

import json

import pytest

from deskbot.deploy import ComponentState, DeployManager, DirectoryWatcher
from deskbot.errors import (
    DuplicateVersion,
    IllegalTransition,
    ParseError,
    UnresolvedRequires,
    VersionNotNewer,
)
from deskbot.mapper import MapperManager

from rig import make_rig


def reminder_bundle(version="1.0.0", priority=50):
    return {
        "bundle": {"id": "reminder", "version": version, "kind": "behavior",
                   "priority_default": priority, "autostart": True,
                   "requires": ["cap:t2s"]},
        "situations": [{"id": "mario:sit/lunchtime", "condition": {"all": [
            {"time_window": {"start": "12:00", "end": "13:00"}},
            {"kb_not": ["mario:user1", "mario:pillStatus", "mario:reminded"]}]}}],
        "goals": [{"id": "mario:goal/remind-pills"}],
        "affordances": [{"situation": "mario:sit/lunchtime",
                         "goal": "mario:goal/remind-pills"}],
        "behaviors": [{"id": "mario:beh/reminder",
                       "achieves": "mario:goal/remind-pills",
                       "required_capabilities": ["cap:t2s"],
                       "plan": [{"speak": {"text": "pills"}},
                                {"assert": ["mario:user1", "mario:pillStatus",
                                            "mario:reminded"]}]}],
    }


def sentiment_bundle(version="1.0.0"):
    return {
        "bundle": {"id": "sentiment", "version": version, "kind": "capability"},
        "capability": {"capability_id": "cap:sentiment",
                       "ops": [{"name": "analyze", "result": {"score": 1}}]},
    }


def mapper_bundle():
    return {
        "bundle": {"id": "people-model", "version": "1.0.0", "kind": "mapper"},
        "ontology": ("mario:Person rdfs:subClassOf mario:Agent .\n"
                     "mario:hasAge rdf:type rdf:Property .\n"
                     "mario:hasAge rdf:type mario:FunctionalProperty .\n"
                     "mario:hasAge rdfs:range xsd:integer .\n"),
    }


@pytest.fixture
def setup():
    rig = make_rig()
    mappers = MapperManager(rig.kb, rig.prefixes)
    manager = DeployManager(rig.engine, mappers, rig.layer.registry,
                            rig.broker, rig.kb, rig.prefixes)
    return rig, manager


def test_install_leaves_engine_unchanged(setup):
    rig, manager = setup
    manager.install(reminder_bundle())
    assert manager.state_of("reminder") == ComponentState.INSTALLED
    assert rig.engine.behavior_view() == []


def test_install_duplicate_version(setup):
    _, manager = setup
    manager.install(reminder_bundle())
    with pytest.raises(DuplicateVersion):
        manager.install(reminder_bundle())


def test_install_with_missing_requirement_flags_unresolved(setup):
    _, manager = setup
    doc = reminder_bundle()
    doc["bundle"]["requires"] = ["cap:tts2"]
    manager.install(doc)
    record = manager.list_bundles()[0]
    assert record["state"] == "Installed"
    assert record["unresolved"] == ["cap:tts2"]


def test_start_registers_with_engine(setup):
    rig, manager = setup
    manager.install(reminder_bundle())
    manager.start("reminder")
    assert [b["behavior_id"] for b in rig.engine.behavior_view()] \
        == [rig.prefixes.expand("mario:beh/reminder")]


def test_start_with_unresolved_requires(setup):
    _, manager = setup
    doc = reminder_bundle()
    doc["bundle"]["requires"] = ["cap:tts2"]
    manager.install(doc)
    with pytest.raises(UnresolvedRequires):
        manager.start("reminder")


def test_stop_terminates_active_instance(setup):
    rig, manager = setup
    manager.install(reminder_bundle())
    manager.start("reminder")
    rig.clock.set_time("12:00")
    rig.tick()
    assert rig.engine.active_instance is not None
    manager.stop("reminder")
    assert rig.engine.active_instance is None
    lifecycle = [e for e in rig.broker.publish_log()
                 if e.topic == "behavior/lifecycle"]
    assert lifecycle[-1].payload["to_state"] == "Terminated"
    assert lifecycle[-1].payload["origin"] == "deploy"
    assert rig.engine.behavior_view() == []


def test_illegal_transitions(setup):
    _, manager = setup
    manager.install(reminder_bundle())
    with pytest.raises(IllegalTransition):
        manager.stop("reminder")          # not started
    manager.start("reminder")
    with pytest.raises(IllegalTransition):
        manager.start("reminder")         # already started
    with pytest.raises(IllegalTransition):
        manager.uninstall("reminder")     # stop first
    manager.stop("reminder")
    manager.uninstall("reminder")
    assert manager.list_bundles() == []


def test_update_requires_newer_version(setup):
    _, manager = setup
    manager.install(reminder_bundle("1.2.0"))
    with pytest.raises(VersionNotNewer):
        manager.update("reminder", reminder_bundle("1.2.0"))
    with pytest.raises(VersionNotNewer):
        manager.update("reminder", reminder_bundle("1.0.9"))


def test_update_changes_priority_for_next_selection(setup):
    rig, manager = setup
    manager.install(reminder_bundle(priority=10))
    manager.start("reminder")
    manager.update("reminder", reminder_bundle("1.1.0", priority=90))
    rig.clock.set_time("12:00")
    report = rig.tick()
    assert report.decision["kind"] == "activate"
    goal = rig.engine._goals[rig.prefixes.expand("mario:goal/remind-pills")]
    assert goal.priority == 90


def test_update_mid_active_leaves_no_orphans(setup):
    rig, manager = setup
    manager.install(reminder_bundle())
    manager.start("reminder")
    rig.clock.set_time("12:00")
    rig.tick()
    before = manager.registrations()
    manager.update("reminder", reminder_bundle("2.0.0"))
    after = manager.registrations()
    assert set(before) == set(after) == {"reminder"}
    assert before["reminder"] == after["reminder"]   # same keys, new version
    assert rig.engine.active_instance is None        # old instance terminated
    record = manager.list_bundles()[0]
    assert record["version"] == "2.0.0" and record["state"] == "Started"


def test_capability_bundle_lifecycle(setup):
    rig, manager = setup
    manager.install(sentiment_bundle())
    manager.start("sentiment")
    assert rig.layer.registry.has("cap:sentiment")
    result = rig.layer.registry.invoke("cap:sentiment", "analyze", {"text": "x"})
    assert result == {"score": 1}
    manager.stop("sentiment")
    assert not rig.layer.registry.has("cap:sentiment")


def test_mapper_bundle_lifecycle(setup):
    rig, manager = setup
    mappers = manager.mappers
    manager.install(mapper_bundle())
    manager.start("people-model")
    assert len(mappers.module_ids()) == 1
    module_id = mappers.module_ids()[0]
    mapper = mappers.get(module_id)
    iri = mapper.create("Person", {"mario:hasAge": 70})
    assert mapper.read(iri)["props"] == {"mario:hasAge": 70}
    manager.stop("people-model")
    assert mappers.module_ids() == []


def test_registry_diff_confined_to_touched_bundle(setup):
    rig, manager = setup
    manager.install(reminder_bundle())
    manager.start("reminder")
    manager.install(sentiment_bundle())
    manager.start("sentiment")
    before = manager.registrations()["reminder"]
    manager.stop("sentiment")
    manager.update("sentiment", sentiment_bundle("1.1.0"))
    assert manager.registrations()["reminder"] == before


def test_crash_containment_failing_bundle_does_not_block_others(setup):
    """A bundle whose plan always fails cannot stop other bundles'
    behaviors from being selected on later ticks."""
    rig, manager = setup
    crasher = {
        "bundle": {"id": "crasher", "version": "1.0.0", "kind": "behavior"},
        "situations": [{"id": "mario:sit/always", "condition": {"all": [
            {"time_window": {"start": "00:00", "end": "23:59"}}]}}],
        "goals": [{"id": "mario:goal/crash", "priority": 10}],
        "affordances": [{"situation": "mario:sit/always",
                         "goal": "mario:goal/crash"}],
        "behaviors": [{"id": "mario:beh/crash", "achieves": "mario:goal/crash",
                       "required_capabilities": ["cap:t2s"],
                       "plan": [{"call": {"capability": "cap:t2s",
                                          "op": "bogus", "args": {}}}]}],
    }
    manager.install(crasher)
    manager.start("crasher")
    manager.install(reminder_bundle())
    manager.start("reminder")
    rig.run(4)   # crasher activates and fails repeatedly
    lifecycle = [e for e in rig.broker.publish_log()
                 if e.topic == "behavior/lifecycle"]
    assert any(e.payload["to_state"] == "Failed" for e in lifecycle)
    rig.clock.set_time("12:00")   # now the healthy bundle's situation holds
    rig.run(6)
    reminder_runs = [e for e in rig.broker.publish_log()
                     if e.topic == "behavior/lifecycle"
                     and e.payload["behavior_id"].endswith("beh/reminder")]
    assert any(e.payload["to_state"] == "Completed" for e in reminder_runs)


def test_parse_error_on_malformed_document(setup):
    _, manager = setup
    with pytest.raises(ParseError):
        manager.install({"bundle": {"id": "x"}})                 # no version
    with pytest.raises(ParseError):
        manager.install({"bundle": {"id": "x", "version": "1.0"}})
    with pytest.raises(ParseError):
        manager.install({"bundle": {"id": "x", "version": "1.0.0",
                                    "kind": "capability"}})      # no payload


# --- watcher ------------------------------------------------------------------

def write_bundle(directory, name, doc):
    path = directory / f"{name}.bundle.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_watch_install_within_two_scans(setup, tmp_path):
    rig, manager = setup
    watcher = DirectoryWatcher(manager, tmp_path)
    watcher.scan()
    write_bundle(tmp_path, "reminder", reminder_bundle())
    actions = watcher.scan() + watcher.scan()
    assert ("installed", "reminder") in actions
    assert manager.state_of("reminder") == ComponentState.STARTED


def test_watch_malformed_file_is_contained(setup, tmp_path):
    rig, manager = setup
    watcher = DirectoryWatcher(manager, tmp_path)
    (tmp_path / "bad.bundle.json").write_text("{not json", encoding="utf-8")
    actions = watcher.scan()
    assert actions and actions[0][0] == "error"
    errors = [e for e in rig.broker.publish_log()
              if e.topic == "deploy/events" and e.payload["event"] == "error"]
    assert errors
    # runtime unaffected: a good bundle still deploys
    write_bundle(tmp_path, "reminder", reminder_bundle())
    watcher.scan()
    assert manager.state_of("reminder") == ComponentState.STARTED


def test_watch_overwrite_with_higher_version_updates(setup, tmp_path):
    rig, manager = setup
    watcher = DirectoryWatcher(manager, tmp_path)
    write_bundle(tmp_path, "reminder", reminder_bundle("1.0.0"))
    watcher.scan()
    write_bundle(tmp_path, "reminder", reminder_bundle("1.1.0"))
    actions = watcher.scan()
    assert ("updated", "reminder") in actions
    assert manager.list_bundles()[0]["version"] == "1.1.0"


def test_watch_unchanged_file_is_not_rescanned(setup, tmp_path):
    rig, manager = setup
    watcher = DirectoryWatcher(manager, tmp_path)
    write_bundle(tmp_path, "reminder", reminder_bundle())
    assert watcher.scan() != []
    assert watcher.scan() == []


def test_docs_copy_matches_packaged_schema():
    from pathlib import Path
    import deskbot.deploy as deploy_module
    packaged = Path(deploy_module.__file__).parent / "resources" / "bundle.schema.json"
    docs = Path(__file__).resolve().parent.parent / "docs" / "bundle.schema.json"
    assert json.loads(packaged.read_text()) == json.loads(docs.read_text())
