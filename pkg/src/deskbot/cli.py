"""Command-line entrypoint: run/replay the runtime, and operate a live
runtime's KB and deploy surface over its gateway."""

from __future__ import annotations

import json
import sys
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path

import click

from deskbot.kb.textio import load_document
from deskbot.kb.terms import PrefixMap, format_term
from deskbot.runtime import Runtime, RuntimeConfig, replay as replay_run


@click.group()
def main():
    """Desk-scale social-robot runtime."""


def _http(method: str, url: str, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    request = urllib.request.Request(url, data=data, method=method)
    if data is not None:
        request.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(request, timeout=30) as response:
            body = response.read().decode()
    except urllib.error.HTTPError as exc:
        click.echo(f"error {exc.code}: {exc.read().decode()}", err=True)
        sys.exit(1)
    except urllib.error.URLError as exc:
        click.echo(f"cannot reach runtime at {url}: {exc.reason}", err=True)
        sys.exit(1)
    return json.loads(body) if body.startswith(("{", "[")) else body


# --- runtime ------------------------------------------------------------------

@main.group()
def runtime():
    """Run, serve, and replay the runtime."""


def _load_world(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


@runtime.command()
@click.option("--world", "world_path", required=True, type=click.Path(exists=True),
              help="world JSON file")
@click.option("--bundles", "bundles_dir", type=click.Path(), default=None,
              help="directory of *.bundle.json files (watched)")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--headless", is_flag=True, help="run without the gateway and exit")
@click.option("--scenario", "scenario_path", type=click.Path(exists=True),
              default=None)
@click.option("--record", "record_dir", type=click.Path(), default=None,
              help="write trace.ndjson and journal.json here")
@click.option("--ticks", type=int, default=None,
              help="headless run length (default: scenario horizon + 10)")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="config JSON (or set RUNTIME_CONFIG)")
def run(world_path, bundles_dir, port, host, headless, scenario_path,
        record_dir, ticks, config_path):
    """Start the runtime, optionally headless with a scripted scenario."""
    config = RuntimeConfig.load(config_path)
    rt = Runtime(_load_world(world_path), config, bundles_dir)
    rt.load_bundles()
    if scenario_path:
        rt.load_scenario_file(scenario_path)
    if headless:
        horizon = ticks if ticks is not None else rt.scenario_horizon + 10
        rt.run_ticks(horizon)
        if record_dir:
            rt.record(record_dir)
        click.echo(f"completed {horizon} ticks, "
                   f"{len(rt.broker.publish_log())} envelopes")
        return
    from deskbot.gateway import serve
    click.echo(f"gateway on http://{host}:{port} (tick {config.tick_ms} ms)")
    try:
        serve(rt, host=host, port=port)
    finally:
        if record_dir:
            rt.record(record_dir)


@runtime.command("replay")
@click.option("--world", "world_path", required=True, type=click.Path(exists=True))
@click.option("--bundles", "bundles_dir", type=click.Path(), default=None)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True),
              default=None)
@click.option("--journal", "journal_path", type=click.Path(exists=True),
              default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ticks", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def runtime_replay(world_path, bundles_dir, scenario_path, journal_path,
                   out_dir, ticks, config_path):
    """Re-execute a recorded run; identical inputs produce identical traces."""
    config = RuntimeConfig.load(config_path)
    scenario = (json.loads(Path(scenario_path).read_text(encoding="utf-8"))
                if scenario_path else None)
    journal = (json.loads(Path(journal_path).read_text(encoding="utf-8"))
               if journal_path else None)
    rt = replay_run(_load_world(world_path), config, bundles_dir,
                    scenario, journal, ticks)
    rt.record(out_dir)
    click.echo(f"replayed to tick {rt.clock.tick}; trace in {out_dir}")


# --- kb ------------------------------------------------------------------------

@main.group()
def kb():
    """Knowledge-base operations against a live runtime."""


@kb.command("load")
@click.argument("path", type=click.Path(exists=True))
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def kb_load(path, url):
    """Assert every triple in a document (journaled operator commands)."""
    prefixes = PrefixMap()
    triples, pm = load_document(path, prefixes)
    applied = 0
    for t in triples:
        result = _http("POST", f"{url}/command", {
            "kind": "kb_assert", "operator_id": "cli",
            "args": {"s": format_term(t.s, pm), "p": format_term(t.p, pm),
                     "o": format_term(t.o, pm)}})
        if result.get("status") == "applied":
            applied += 1
    click.echo(f"asserted {applied}/{len(triples)} triples")


@kb.command("dump")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def kb_dump(url):
    """Print the asserted triples of a live runtime."""
    click.echo(_http("GET", f"{url}/kb/dump"), nl=False)


@kb.command("query")
@click.argument("patterns", nargs=-1, required=True)
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def kb_query(patterns, url):
    """Query with one or more "s p o" patterns (?vars allowed)."""
    qs = "&".join("pattern=" + urllib.parse.quote(p) for p in patterns)
    result = _http("GET", f"{url}/kb/query?{qs}")
    for binding in result["bindings"]:
        click.echo(json.dumps(binding, sort_keys=True))
    click.echo(f"# {len(result['bindings'])} bindings at version "
               f"{result['version']}")


# --- deploy -----------------------------------------------------------------------

@main.group()
def deploy():
    """Bundle lifecycle on a live runtime."""


def _deploy_op(url, payload):
    result = _http("POST", f"{url}/deploy", payload)
    click.echo(json.dumps(result.get("bundles", result), indent=2, sort_keys=True))


@deploy.command("install")
@click.argument("path", type=click.Path(exists=True))
@click.option("--start", is_flag=True, help="start right after install")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def deploy_install(path, start, url):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    _deploy_op(url, {"op": "install", "document": doc, "start": start})


@deploy.command("update")
@click.argument("path", type=click.Path(exists=True))
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def deploy_update(path, url):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    _deploy_op(url, {"op": "update", "document": doc})


@deploy.command("start")
@click.argument("bundle_id")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def deploy_start(bundle_id, url):
    _deploy_op(url, {"op": "start", "bundle_id": bundle_id})


@deploy.command("stop")
@click.argument("bundle_id")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def deploy_stop(bundle_id, url):
    _deploy_op(url, {"op": "stop", "bundle_id": bundle_id})


@deploy.command("uninstall")
@click.argument("bundle_id")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def deploy_uninstall(bundle_id, url):
    _deploy_op(url, {"op": "uninstall", "bundle_id": bundle_id})


@deploy.command("list")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
def deploy_list(url):
    result = _http("GET", f"{url}/bundles")
    click.echo(json.dumps(result["bundles"], indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
