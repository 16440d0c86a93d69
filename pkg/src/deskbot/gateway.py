"""Supervisory gateway: the Wizard-of-Oz surface.

HTTP+JSON endpoints expose KB, engine, world, bus, and deploy state; a
single WebSocket stream pushes one StateFrame per tick. All mutations
funnel through the runtime's command queue and apply at tick boundaries,
so remote operation never breaks the engine's determinism. Every command
is journaled before execution; the journal is downloadable for replay.
"""

from __future__ import annotations

import asyncio
import json
from typing import Dict, List

from fastapi import Body, FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse

from deskbot.errors import (
    CommandValidationError,
    DeskbotError,
    MapperError,
    UnknownInstance,
)
from deskbot.kb.terms import Pattern, format_term, parse_term
from deskbot.kb.textio import dump_triples
from deskbot.runtime import Runtime


def build_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="deskbot supervisory gateway", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.runtime = runtime

    # -- observation ------------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok", "tick": runtime.clock.tick,
                "time_of_day": runtime.clock.time_of_day}

    @app.get("/kb/query")
    def kb_query(pattern: List[str] = Query(...),
                 provenance: str = "all"):
        """Conjunctive pattern query. Each `pattern` is "s p o" with ?vars."""
        try:
            patterns = []
            for text in pattern:
                tokens = text.split()
                if len(tokens) != 3:
                    raise HTTPException(400, f"pattern needs 3 terms: {text!r}")
                patterns.append(Pattern(*(parse_term(t, runtime.prefixes)
                                          for t in tokens)))
            snapshot = runtime.kb.snapshot()
            if provenance == "asserted":
                from deskbot.kb.store import solve
                bindings = solve(snapshot.asserted, patterns)
            else:
                bindings = snapshot.query(patterns)
        except HTTPException:
            raise
        except DeskbotError as exc:
            raise HTTPException(400, f"{type(exc).__name__}: {exc}")
        return {"version": snapshot.version,
                "bindings": [{k: format_term(v, runtime.prefixes)
                              for k, v in b.items()} for b in bindings]}

    @app.get("/kb/dump", response_class=PlainTextResponse)
    def kb_dump():
        return dump_triples(runtime.kb.asserted_triples(), runtime.prefixes)

    @app.get("/behaviors")
    def behaviors():
        active = runtime.engine.active_instance
        return {"behaviors": runtime.engine.behavior_view(),
                "active": active.summary() if active else None,
                "suspended": [i.summary()
                              for i in runtime.engine.suspended_instances]}

    @app.get("/bundles")
    def bundles():
        return {"bundles": runtime.deploy.list_bundles(),
                "registrations": runtime.deploy.registrations()}

    @app.get("/world")
    def world():
        return {**runtime.world.to_dict(),
                "widgets": runtime.layer.hci.widgets(),
                "capabilities": runtime.layer.registry.view()}

    @app.get("/journal")
    def journal():
        return {"journal": [e.to_dict() for e in runtime.journal]}

    @app.get("/trace", response_class=PlainTextResponse)
    def trace():
        return runtime.trace_ndjson()

    # -- mapper resources --------------------------------------------------------

    @app.get("/kb/{module_id}/{class_local}")
    def mapper_list(module_id: str, class_local: str):
        mapper = _mapper(module_id)
        try:
            return {"instances": mapper.list_instances(class_local)}
        except MapperError as exc:
            raise HTTPException(404, str(exc))

    @app.post("/kb/{module_id}/{class_local}")
    def mapper_create(module_id: str, class_local: str,
                      body: Dict = Body(default={})):
        mapper = _mapper(module_id)
        try:
            iri = mapper.create(class_local, body.get("props", {}))
            return mapper.read(iri)
        except MapperError as exc:
            raise HTTPException(400, f"{type(exc).__name__}: {exc}")

    @app.get("/kb/{module_id}/{class_local}/{num}")
    def mapper_read(module_id: str, class_local: str, num: int):
        mapper = _mapper(module_id)
        try:
            return mapper.read(f"mario:inst/{class_local}/{num}")
        except UnknownInstance as exc:
            raise HTTPException(404, str(exc))
        except MapperError as exc:
            raise HTTPException(400, f"{type(exc).__name__}: {exc}")

    @app.put("/kb/{module_id}/{class_local}/{num}")
    def mapper_update(module_id: str, class_local: str, num: int,
                      body: Dict = Body(default={})):
        mapper = _mapper(module_id)
        try:
            return mapper.update(f"mario:inst/{class_local}/{num}",
                                 body.get("props", {}))
        except UnknownInstance as exc:
            raise HTTPException(404, str(exc))
        except MapperError as exc:
            raise HTTPException(400, f"{type(exc).__name__}: {exc}")

    @app.delete("/kb/{module_id}/{class_local}/{num}")
    def mapper_delete(module_id: str, class_local: str, num: int):
        mapper = _mapper(module_id)
        try:
            mapper.delete(f"mario:inst/{class_local}/{num}")
            return {"deleted": True}
        except UnknownInstance as exc:
            raise HTTPException(404, str(exc))

    def _mapper(module_id: str):
        try:
            return runtime.mappers.get(module_id)
        except UnknownInstance:
            raise HTTPException(404, f"no mapper module {module_id!r}")

    # -- commands -------------------------------------------------------------------

    @app.post("/command")
    def command(body: Dict = Body(...)):
        kind = body.get("kind", "")
        args = body.get("args", {})
        operator = body.get("operator_id", "operator")
        try:
            entry = runtime.submit_command(kind, args, operator)
        except CommandValidationError as exc:
            raise HTTPException(400, detail={"error": str(exc),
                                             "journal_index": len(runtime.journal) - 1})
        runtime.wait_applied(entry, timeout=10.0)
        return {"journal_index": entry.index, "status": entry.status,
                "applied_tick": entry.applied_tick, "error": entry.error}

    @app.post("/deploy")
    def deploy_command(body: Dict = Body(...)):
        entry = None
        try:
            entry = runtime.submit_command(
                "deploy_op", body, body.get("operator_id", "operator"))
        except CommandValidationError as exc:
            raise HTTPException(400, detail=str(exc))
        runtime.wait_applied(entry, timeout=10.0)
        if entry.status == "failed":
            raise HTTPException(409, detail=entry.error)
        return {"journal_index": entry.index, "status": entry.status,
                "applied_tick": entry.applied_tick,
                "bundles": runtime.deploy.list_bundles()}

    # -- frame stream ------------------------------------------------------------------

    @app.websocket("/stream")
    async def stream(socket: WebSocket):
        await socket.accept()
        last_sent = -1
        try:
            while True:
                frame = runtime.latest_frame
                if frame is not None and frame["tick"] > last_sent:
                    last_sent = frame["tick"]
                    await socket.send_text(json.dumps(frame, sort_keys=True))
                else:
                    await asyncio.sleep(runtime.config.tick_ms / 4000.0)
        except (WebSocketDisconnect, RuntimeError):
            return

    return app


def serve(runtime: Runtime, host: str = "127.0.0.1", port: int = 8000):
    """Run the gateway plus the runtime loop until interrupted."""
    import errno
    import uvicorn

    from deskbot.errors import PortInUse

    app = build_app(runtime)
    runtime.start_loop()
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    try:
        server.run()
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise PortInUse(f"{host}:{port}") from None
        raise
    finally:
        runtime.stop_loop()
