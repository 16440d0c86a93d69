"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s`` to see them
on success).

Criteria are property- and trace-based:
  1. inference closure equals the naive fixpoint oracle on 200 random graphs (<10 s)
  2. bus delivery is gap-free increasing under 1000 random interleavings (<5 s)
  3. goal arbitration matches the decision-rule oracle exhaustively,
     invariant under 20 positive-affine priority transforms
  4. the lunchtime scenario activates exactly one reminder at the first
     tick >= 12:00, once, deterministically across 5 replays (<2 s)
  5. hot deploy never reboots: 300-tick run with install@100/update@200
  6. nested preemption depth 3 resumes in exact LIFO order
  7. mapper CRUD stays consistent with an instance-level shadow oracle
     over 100 random sequences
  8. headless CLI run reproduces the committed golden trace with exit 0
"""

import json
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from deskbot.bus import MessageBroker, SchemaRegistry
from deskbot.kb import TripleStore
from deskbot.mapper import MapperManager
from deskbot.runtime import Runtime, RuntimeConfig, replay

from oracles import LifecycleChecker, naive_closure, random_graph, selection_oracle
from rig import WORLD, make_rig
from test_deploy import reminder_bundle, write_bundle
from test_selection import _enumerate_cases, _run_impl

REPO = Path(__file__).resolve().parent.parent

_results = []


def _report(name: str, ok: bool, detail: str = ""):
    line = f"{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else "")
    print(line)
    _results.append(line)
    assert ok, line


def teardown_module(module):
    print("\n--- acceptance summary ---")
    for line in _results:
        print(line)


# -- 1. inference oracle equivalence ------------------------------------------------

def test_inference_oracle_equivalence():
    started = time.monotonic()
    rng = random.Random(20260811)
    for case in range(200):
        graph = random_graph(rng, max_triples=50, max_axioms=10)
        kb = TripleStore()
        kb.mutate(add=graph)
        kb.materialize()
        assert set(kb.inferred_triples()) == naive_closure(graph), f"case {case}"
    elapsed = time.monotonic() - started
    _report("inference oracle equivalence (200 graphs)", elapsed < 10.0,
            f"{elapsed:.2f}s")


# -- 2. bus ordering under random interleavings ---------------------------------------

def test_bus_ordering_random_interleavings():
    started = time.monotonic()
    rng = random.Random(4242)
    for case in range(1000):
        schemas = SchemaRegistry()
        schemas.define("Msg", {"n": "integer"})
        broker = MessageBroker(schemas=schemas, retention=4096)
        broker.create_topic("t", "Msg")
        subs = [broker.subscribe("t", f"s{i}", "earliest")
                for i in range(rng.randint(1, 3))]
        seen = {s.subscriber_id: [] for s in subs}
        published = 0
        for _ in range(rng.randint(5, 40)):
            if rng.random() < 0.5:
                published += 1
                broker.publish("t", {"n": published}, "p")
            else:
                sub = rng.choice(subs)
                seen[sub.subscriber_id].extend(
                    e.seq for e in broker.poll(sub, rng.randint(1, 8)))
        for sub in subs:
            seen[sub.subscriber_id].extend(
                e.seq for e in broker.poll(sub, 10_000))
            got = seen[sub.subscriber_id]
            assert got == list(range(1, published + 1)), f"case {case}"
    elapsed = time.monotonic() - started
    _report("bus gap-free increasing delivery (1000 interleavings)",
            elapsed < 5.0, f"{elapsed:.2f}s")


# -- 3. arbitration decision table ------------------------------------------------------

def test_arbitration_decision_table():
    cases = 0
    for cands, running in _enumerate_cases():
        assert _run_impl(cands, running) == selection_oracle(cands, running)
        cases += 1

    from deskbot.engine import Goal, select_goal
    from deskbot.kb.terms import Iri
    rng = random.Random(99)
    base = list(_enumerate_cases())
    transforms = 0
    for _ in range(20):
        scale = rng.uniform(0.05, 12.0)
        offset = rng.uniform(-100.0, 100.0)
        transforms += 1
        for cands, running in rng.sample(base, 30):
            plain = _run_impl(cands, running)
            goals = [(Goal(Iri(f"urn:g/{g}"), p * scale + offset, f), {})
                     for g, p, f in cands]
            running_goal = (Goal(Iri(f"urn:g/{running[0]}"),
                                 running[1] * scale + offset)
                            if running else None)
            decision = select_goal(goals, running_goal)
            gid = decision.goal.id.value[6:] if decision.goal else None
            assert (decision.kind.value, gid) == plain
    _report("arbitration table vs oracle + affine invariance",
            True, f"{cases} cases, {transforms} transforms")


# -- 4. lunchtime scenario ----------------------------------------------------------------

LUNCH_SCENARIO = [{"tick": 0, "action": "clock_set", "args": {"time": "11:58"}}]


def _lunch_run(tmp_path, label):
    bundles = tmp_path / f"bundles-{label}"
    bundles.mkdir(exist_ok=True)
    write_bundle(bundles, "reminder", reminder_bundle())
    runtime = replay(dict(WORLD), RuntimeConfig(), str(bundles),
                     LUNCH_SCENARIO, None, ticks=5)  # 11:58 -> 12:02
    return runtime


def test_lunchtime_scenario(tmp_path):
    started = time.monotonic()
    traces = []
    for attempt in range(5):
        runtime = _lunch_run(tmp_path, attempt)
        traces.append(runtime.trace_ndjson())
    assert len(set(traces)) == 1, "replays diverged"

    runtime = _lunch_run(tmp_path, "check")
    log = runtime.broker.publish_log()
    activations = [e for e in log if e.topic == "behavior/lifecycle"
                   and e.payload["to_state"] == "Active"
                   and "from_state" not in e.payload]
    assert len(activations) == 1, f"{len(activations)} activations"
    # clock 11:58 at tick 0 -> first tick at/after 12:00 is tick 2
    assert activations[0].timestamp == 2
    speech = [e for e in log if e.topic == "speech/out"]
    assert len(speech) == 1
    from deskbot.kb.terms import Iri, Triple
    assert runtime.kb.holds(Triple(
        Iri(runtime.prefixes.expand("mario:user1")),
        Iri(runtime.prefixes.expand("mario:pillStatus")),
        Iri(runtime.prefixes.expand("mario:reminded"))))
    elapsed = time.monotonic() - started
    _report("lunchtime scenario (single reminder, 5 identical replays)",
            elapsed < 2.0, f"{elapsed:.2f}s")


# -- 5. hot-deploy no-reboot ------------------------------------------------------------------

def second_bundle(version="1.0.0", priority=70):
    return {
        "bundle": {"id": "greeter", "version": version, "kind": "behavior",
                   "priority_default": priority, "autostart": True,
                   "requires": ["cap:t2s"]},
        "situations": [{"id": "mario:sit/greet", "condition": {"all": [
            {"kb_not": ["mario:user1", "mario:greetStatus", "mario:done"]}]}}],
        "goals": [{"id": "mario:goal/greet", "preemptive": True}],
        "affordances": [{"situation": "mario:sit/greet",
                         "goal": "mario:goal/greet"}],
        "behaviors": [{"id": "mario:beh/greet", "achieves": "mario:goal/greet",
                       "required_capabilities": ["cap:t2s"],
                       "plan": [{"speak": {"text": f"hello there v{version}"}},
                                {"assert": ["mario:user1", "mario:greetStatus",
                                            "mario:done"]}]}],
    }


def test_hot_deploy_no_reboot(tmp_path):
    bundles = tmp_path / "bundles"
    bundles.mkdir()
    write_bundle(bundles, "reminder", reminder_bundle())
    runtime = Runtime(dict(WORLD), RuntimeConfig(scan_interval_ticks=5),
                      str(bundles))
    runtime.load_bundles()
    frames = []
    runtime.on_frame(frames.append)

    first_regs = runtime.deploy.registrations()["reminder"]
    scan_interval = runtime.config.scan_interval_ticks
    installed_at = updated_at = None
    greet_activation = None

    for k in range(300):
        if k == 100:
            write_bundle(bundles, "greeter", second_bundle("1.0.0"))
        if k == 200:
            # bump version, and reset the trigger so v2 runs again
            runtime.kb.mutate(remove=[t for t in runtime.kb.asserted_triples()
                                      if t.s.value.endswith("user1")
                                      and t.p.value.endswith("greetStatus")])
            write_bundle(bundles, "greeter", second_bundle("2.0.0"))
        runtime.tick()
        state = runtime.deploy.state_of("greeter")
        if installed_at is None and state is not None:
            installed_at = k
        if updated_at is None and state is not None and k >= 200:
            bundles_view = {b["bundle_id"]: b["version"]
                            for b in runtime.deploy.list_bundles()}
            if bundles_view.get("greeter") == "2.0.0":
                updated_at = k
        if greet_activation is None:
            for env in runtime.broker.publish_log():
                if env.topic == "behavior/lifecycle" \
                        and env.payload["behavior_id"].endswith("beh/greet") \
                        and env.payload["to_state"] == "Active":
                    greet_activation = env.timestamp
                    break
        # (b) untouched bundle's registrations never change
        assert runtime.deploy.registrations()["reminder"] == first_regs, \
            f"reminder registrations disturbed at tick {k}"

    ticks = [f["tick"] for f in frames]
    assert ticks == list(range(300)), "tick counter reset"
    assert installed_at is not None and installed_at <= 100 + 2 * scan_interval
    assert updated_at is not None and updated_at <= 200 + 2 * scan_interval
    assert greet_activation is not None
    assert greet_activation <= installed_at + 2 * scan_interval
    v2_speech = [e for e in runtime.broker.publish_log()
                 if e.topic == "speech/out" and "v2.0.0" in e.payload["text"]]
    assert v2_speech, "updated bundle never ran"
    _report("hot-deploy no-reboot (300 ticks, install@100, update@200)", True,
            f"installed tick {installed_at}, updated tick {updated_at}, "
            f"first activation tick {greet_activation}")


# -- 6. preemption / resume LIFO ---------------------------------------------------------------

def test_nested_preemption_depth3_lifo():
    rig = make_rig()
    from test_engine import _fire, _nested_bundle
    rig.register(**_nested_bundle(1, 10, sleep=40))
    rig.register(**_nested_bundle(2, 40, sleep=30))
    rig.register(**_nested_bundle(3, 70, sleep=20))
    rig.register(**_nested_bundle(4, 95, sleep=10))
    probe = rig.broker.subscribe("behavior/lifecycle", "probe", "earliest")

    for n in (1, 2, 3, 4):
        _fire(rig, n)
        rig.tick()
    for _ in range(120):
        rig.tick()

    events = rig.broker.poll(probe, 10_000)
    checker = LifecycleChecker()
    for env in events:
        checker.feed_envelope(env)
    assert checker.ok, checker.violations

    resumes = [e.payload["behavior_id"][-1] for e in events
               if e.payload.get("from_state") == "Suspended"
               and e.payload["to_state"] == "Active"]
    assert resumes == ["3", "2", "1"], f"resume order {resumes}"
    completions = [e.payload["behavior_id"][-1] for e in events
                   if e.payload["to_state"] == "Completed"]
    assert completions == ["4", "3", "2", "1"]
    _report("nested preemption depth 3 resumes LIFO", True,
            f"resume order p{'-p'.join(resumes)}")


# -- 7. mapper round-trip vs shadow oracle ---------------------------------------------------------

MAPPER_ONTOLOGY = """
mario:Agent rdf:type rdfs:Class .
mario:Person rdfs:subClassOf mario:Agent .
mario:Reminder rdf:type rdfs:Class .
mario:hasAge rdf:type rdf:Property .
mario:hasAge rdf:type mario:FunctionalProperty .
mario:hasAge rdfs:domain mario:Person .
mario:hasAge rdfs:range xsd:integer .
mario:note rdf:type rdf:Property .
mario:note rdfs:range xsd:string .
mario:remindAt rdf:type rdf:Property .
mario:remindAt rdf:type mario:FunctionalProperty .
mario:remindAt rdfs:domain mario:Reminder .
mario:remindAt rdfs:range xsd:time .
"""


class Shadow:
    SUBCLASS = {"Person": {"Person", "Agent"}, "Agent": {"Agent"},
                "Reminder": {"Reminder"}}

    def __init__(self):
        self.items = {}
        self.counters = {"Person": 0, "Reminder": 0}

    def create(self, cls, props):
        self.counters[cls] += 1
        iri = f"mario:inst/{cls}/{self.counters[cls]}"
        self.items[iri] = (cls, {k: [v] for k, v in props.items()})
        return iri

    def update_functional(self, iri, prop, value):
        self.items[iri][1][prop] = [value]

    def append(self, iri, prop, value):
        self.items[iri][1].setdefault(prop, []).append(value)

    def delete(self, iri):
        del self.items[iri]

    def list(self, cls):
        return sorted(iri for iri, (c, _) in self.items.items()
                      if cls in self.SUBCLASS[c])


def test_mapper_roundtrip_vs_shadow():
    kb = TripleStore()
    manager = MapperManager(kb)
    mapper = manager.generate_from_document(MAPPER_ONTOLOGY)
    shadow = Shadow()
    rng = random.Random(77)
    live = []

    for seq in range(100):
        op = rng.choice(("create", "create", "update", "append", "delete",
                         "check"))
        if op == "create" or not live:
            if rng.random() < 0.6:
                props = {"mario:hasAge": rng.randint(1, 99)}
                got = mapper.create("Person", props)
                want = shadow.create("Person", props)
            else:
                props = {"mario:remindAt":
                         f"{rng.randint(10, 13):02d}:{rng.randint(0, 59):02d}"}
                got = mapper.create("Reminder", props)
                want = shadow.create("Reminder", props)
            assert got == want
            live.append(got)
        elif op == "update":
            iri = rng.choice(live)
            if "/Person/" in iri:
                age = rng.randint(1, 99)
                mapper.update(iri, {"mario:hasAge": age})
                shadow.update_functional(iri, "mario:hasAge", age)
        elif op == "append":
            iri = rng.choice(live)
            note = f"note-{seq}"
            mapper.update(iri, {"mario:note": note})
            shadow.append(iri, "mario:note", note)
        elif op == "delete":
            iri = live.pop(rng.randrange(len(live)))
            mapper.delete(iri)
            shadow.delete(iri)
            # no stale triples with the instance as subject
            from deskbot.kb.terms import Iri, Pattern, Variable
            subject = Iri(mapper.model.prefixes.expand(iri))
            assert kb.query([Pattern(subject, Variable("p"), Variable("o"))]) == []
        else:
            for cls in ("Agent", "Person", "Reminder"):
                assert mapper.list_instances(cls) == shadow.list(cls)
            for iri in rng.sample(live, min(3, len(live))):
                cls, stored = shadow.items[iri]
                view = mapper.read(iri)
                flat = {k: (v[0] if len(v) == 1 else sorted(v))
                        for k, v in stored.items()}
                got = {k: (sorted(v) if isinstance(v, list) else v)
                       for k, v in view["props"].items()}
                assert got == flat and view["class"] == f"mario:{cls}"

    for cls in ("Agent", "Person", "Reminder"):
        assert mapper.list_instances(cls) == shadow.list(cls)
    _report("mapper round-trip vs shadow oracle (100 random ops)", True)


# -- 8. end-to-end headless golden trace -----------------------------------------------------------

def test_headless_golden_trace(tmp_path):
    out = tmp_path / "record"
    proc = subprocess.run(
        [sys.executable, "-m", "deskbot.cli", "runtime", "run", "--headless",
         "--world", str(REPO / "demo" / "world.json"),
         "--bundles", str(REPO / "demo" / "bundles"),
         "--scenario", str(REPO / "demo" / "scenario.json"),
         "--record", str(out)],
        capture_output=True, text=True, cwd=REPO, timeout=120)
    assert proc.returncode == 0, proc.stderr
    golden = (REPO / "demo" / "golden_trace.ndjson").read_bytes()
    produced = (out / "trace.ndjson").read_bytes()
    assert produced == golden, "trace differs from committed golden trace"
    _report("headless run reproduces golden trace (exit 0)", True,
            f"{len(produced.splitlines())} envelopes")
