"""Runtime composition: command queue + journal semantics, scenario
execution, kb/changes fan-out, frames, and record/replay determinism."""

import json

import pytest

from deskbot.errors import CommandValidationError
from deskbot.runtime import Runtime, RuntimeConfig, replay

from rig import WORLD
from test_deploy import reminder_bundle, write_bundle


def make_runtime(tmp_path=None, bundles=None, **config_kw):
    config = RuntimeConfig(**config_kw)
    bundles_dir = None
    if bundles:
        bundles_dir = tmp_path / "bundles"
        bundles_dir.mkdir(exist_ok=True)
        for name, doc in bundles.items():
            write_bundle(bundles_dir, name, doc)
    rt = Runtime(dict(WORLD), config, str(bundles_dir) if bundles_dir else None)
    rt.load_bundles()
    return rt


# --- commands ----------------------------------------------------------------

def test_command_applied_at_next_tick_boundary():
    rt = make_runtime()
    entry = rt.submit_command("inject_utterance", {"text": "play music"})
    assert entry.status == "accepted"
    # nothing on the bus until the tick runs
    assert all(e.topic != "speech/in" for e in rt.broker.publish_log())
    rt.tick()
    assert entry.status == "applied"
    assert entry.applied_tick == 0
    speech = [e for e in rt.broker.publish_log() if e.topic == "speech/in"]
    assert len(speech) == 1 and speech[0].payload["intent"] == "play_music"


def test_rejected_command_journaled_and_raises():
    rt = make_runtime()
    with pytest.raises(CommandValidationError):
        rt.submit_command("kb_assert", {"s": "?x", "p": "rdf:type", "o": "mario:P"})
    assert rt.journal[-1].status == "rejected"
    assert rt.journal[-1].error
    rt.tick()   # rejected entries never apply
    assert rt.journal[-1].status == "rejected"


def test_unknown_command_kind_rejected():
    rt = make_runtime()
    with pytest.raises(CommandValidationError):
        rt.submit_command("self_destruct", {})


def test_failed_command_records_error():
    rt = make_runtime()
    entry = rt.submit_command("force_terminate", {})   # nothing active
    rt.tick()
    assert entry.status == "failed"
    assert "NoActiveInstance" in entry.error


def test_journal_completeness():
    rt = make_runtime()
    accepted = []
    for k in range(5):
        accepted.append(rt.submit_command("kb_assert", {
            "s": f"mario:e{k}", "p": "rdf:type", "o": "mario:Thing"}))
        rt.tick()
    indices = [e.index for e in rt.journal]
    assert indices == sorted(set(indices))
    for entry in accepted:
        assert entry.status == "applied" and entry.applied_tick is not None


def test_set_clock_and_kb_commands():
    rt = make_runtime()
    rt.submit_command("set_clock", {"time": "12:30"})
    rt.tick()
    assert rt.clock.time_of_day == "12:31"   # one tick elapsed after set
    entry = rt.submit_command("kb_assert", {"s": "mario:u", "p": "rdf:type",
                                            "o": "mario:Person"})
    rt.tick()
    assert entry.status == "applied"
    retract = rt.submit_command("kb_retract", {"s": "mario:u", "p": "rdf:type",
                                               "o": "mario:Person"})
    rt.tick()
    assert retract.status == "applied"


# --- kb/changes --------------------------------------------------------------

def test_kb_change_envelopes():
    rt = make_runtime()
    sub = rt.broker.subscribe("kb/changes", "probe", "earliest")
    rt.submit_command("kb_assert", {"s": "mario:u", "p": "rdf:type",
                                    "o": "mario:Person"})
    rt.tick()
    events = [e for e in rt.broker.poll(sub, 100)
              if "mario:u rdf:type mario:Person" in e.payload["added"]]
    assert len(events) == 1
    payload = events[0].payload
    assert payload["removed"] == [] and payload["version"] >= 1


# --- scenarios ----------------------------------------------------------------

def test_scenario_actions_run_at_their_ticks(tmp_path):
    rt = make_runtime(tmp_path, bundles={"reminder": reminder_bundle()})
    rt.load_scenario([
        {"tick": 1, "action": "clock_set", "args": {"time": "11:59"}},
        {"tick": 3, "action": "inject_utterance", "args": {"text": "hello"}},
    ])
    rt.run_ticks(5)
    speech = [e for e in rt.broker.publish_log() if e.topic == "speech/in"]
    assert len(speech) == 1 and speech[0].timestamp == 3
    # clock was 11:59 at tick 1 -> 12:01 by tick 3 -> reminder fired
    outs = [e for e in rt.broker.publish_log() if e.topic == "speech/out"]
    assert len(outs) == 1


def test_scenario_bad_action_rejected():
    rt = make_runtime()
    with pytest.raises(Exception):
        rt.load_scenario([{"tick": 0, "action": "explode", "args": {}}])


# --- frames ----------------------------------------------------------------------

def test_frames_monotone_and_complete(tmp_path):
    rt = make_runtime(tmp_path, bundles={"reminder": reminder_bundle()})
    frames = []
    rt.on_frame(frames.append)
    rt.run_ticks(4)
    ticks = [f["tick"] for f in frames]
    assert ticks == [0, 1, 2, 3]
    assert all("report" in f and "world" in f and "bundles" in f for f in frames)
    assert frames[-1]["bundles"][0]["state"] == "Started"


# --- record / replay ---------------------------------------------------------------

def _drive(rt):
    rt.load_scenario([
        {"tick": 2, "action": "clock_set", "args": {"time": "11:58"}},
        {"tick": 8, "action": "inject_utterance", "args": {"text": "play music"}},
        {"tick": 9, "action": "move_user", "args": {"x": 3, "y": 3}},
    ])
    for k in range(14):
        if k == 4:
            rt.submit_command("kb_assert", {"s": "mario:note", "p": "rdf:type",
                                            "o": "mario:Thing"})
        if k == 6:
            rt.submit_command("move_user", {"x": 2, "y": 2})
        rt.tick()


def test_record_replay_identical_trace(tmp_path):
    rt = make_runtime(tmp_path, bundles={"reminder": reminder_bundle()})
    _drive(rt)
    rt.record(tmp_path / "out")
    trace1 = (tmp_path / "out" / "trace.ndjson").read_bytes()
    journal = json.loads((tmp_path / "out" / "journal.json").read_text())
    scenario = [
        {"tick": 2, "action": "clock_set", "args": {"time": "11:58"}},
        {"tick": 8, "action": "inject_utterance", "args": {"text": "play music"}},
        {"tick": 9, "action": "move_user", "args": {"x": 3, "y": 3}},
    ]
    replayed = replay(dict(WORLD), RuntimeConfig(),
                      str(tmp_path / "bundles"), scenario, journal, ticks=14)
    assert replayed.trace_ndjson().encode() == trace1


def test_replay_twice_byte_identical(tmp_path):
    scenario = [{"tick": 1, "action": "clock_set", "args": {"time": "11:59"}}]
    bundles_dir = tmp_path / "bundles"
    bundles_dir.mkdir()
    write_bundle(bundles_dir, "reminder", reminder_bundle())
    one = replay(dict(WORLD), RuntimeConfig(), str(bundles_dir), scenario,
                 None, ticks=10)
    two = replay(dict(WORLD), RuntimeConfig(), str(bundles_dir), scenario,
                 None, ticks=10)
    assert one.trace_ndjson() == two.trace_ndjson()


def test_replay_of_empty_journal_on_empty_scenario():
    one = replay(dict(WORLD), RuntimeConfig(), None, None, None, ticks=5)
    assert one.clock.tick == 5
    two = replay(dict(WORLD), RuntimeConfig(), None, None, None, ticks=5)
    assert one.trace_ndjson() == two.trace_ndjson()


# --- config --------------------------------------------------------------------------

def test_config_from_env(tmp_path, monkeypatch):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"tick_ms": 50, "seconds_per_tick": 30,
                               "intent_keywords": {"tea": "make_tea"}}))
    monkeypatch.setenv("RUNTIME_CONFIG", str(cfg))
    config = RuntimeConfig.load()
    assert config.tick_ms == 50
    assert config.intent_keywords == {"tea": "make_tea"}


def test_config_rejects_unknown_keys(tmp_path):
    from deskbot.errors import ConfigInvalid
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"warp_speed": 9}))
    with pytest.raises(ConfigInvalid):
        RuntimeConfig.load(str(cfg))
