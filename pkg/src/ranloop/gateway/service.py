"""HTTP/WS service exposing the workbench.

Endpoints:
  POST /runs                      create a run from a JSON config
  GET  /runs/{id}/state           run handle + progress snapshot
  POST /runs/{id}/intents         body {text, dry_run}; dry runs change no state
  GET  /runs/{id}/kpis?window=N   the N most recent KPI records
  GET  /runs/{id}/forecast        latest metric forecast
  WS   /runs/{id}/stream          StreamFrame JSON at a configurable cadence

The port comes from the RANLOOP_PORT environment variable (default 8420).
"""

from __future__ import annotations

import asyncio
import json
import os

from fastapi import FastAPI, Query, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .. import intentd, orchestrator as orc
from .runs import (MissingArtifactError, RunRegistry, SCHEMA_VERSION)

DEFAULT_PORT = 8420


def port_from_env() -> int:
    return int(os.environ.get("RANLOOP_PORT", DEFAULT_PORT))


def _error(status: int, message: str, hint: str | None = None):
    body = {"v": SCHEMA_VERSION, "error": message}
    if hint:
        body["hint"] = hint
    return JSONResponse(status_code=status, content=body)


def create_app(registry: RunRegistry | None = None) -> FastAPI:
    app = FastAPI(title="ranloop gateway", version="1")
    app.state.registry = registry or RunRegistry()

    def get_worker(run_id: str):
        return app.state.registry.get(run_id)

    @app.post("/runs")
    async def create_run(config: dict | None = None):
        try:
            worker = app.state.registry.create(config)
        except ValueError as err:
            return _error(400, str(err))
        except MissingArtifactError as err:
            return _error(409, str(err), hint=err.hint)
        return worker.handle.to_json_dict()

    @app.get("/runs/{run_id}/state")
    async def run_state(run_id: str):
        try:
            return get_worker(run_id).state()
        except KeyError as err:
            return _error(404, str(err.args[0]))

    @app.post("/runs/{run_id}/intents")
    async def submit_intent(run_id: str, body: dict):
        try:
            worker = get_worker(run_id)
        except KeyError as err:
            return _error(404, str(err.args[0]))
        text = body.get("text", "")
        dry_run = bool(body.get("dry_run", False))
        try:
            report = worker.submit_intent(text, dry_run=dry_run)
        except (intentd.IntentError, intentd.StalenessError) as err:
            return _error(400, str(err))
        except orc.StageError as err:
            if err.stage in ("parse", "goal"):
                return _error(400, str(err.cause))
            return _error(500, str(err))
        return {"v": SCHEMA_VERSION, "dry_run": dry_run, "report": report}

    @app.get("/runs/{run_id}/kpis")
    async def run_kpis(run_id: str, window: int = Query(default=10, ge=1)):
        try:
            worker = get_worker(run_id)
        except KeyError as err:
            return _error(404, str(err.args[0]))
        return {"v": SCHEMA_VERSION, "window": window,
                "kpis": worker.kpis(window)}

    @app.get("/runs/{run_id}/forecast")
    async def run_forecast(run_id: str):
        try:
            return get_worker(run_id).forecast()
        except KeyError as err:
            return _error(404, str(err.args[0]))

    @app.websocket("/runs/{run_id}/stream")
    async def stream(ws: WebSocket, run_id: str,
                     interval_ms: int = Query(default=0, ge=0),
                     limit: int = Query(default=0, ge=0)):
        await ws.accept()
        try:
            worker = get_worker(run_id)
        except KeyError:
            await ws.close(code=4404)
            return
        sent = 0
        try:
            while limit == 0 or sent < limit:
                frame = await asyncio.to_thread(worker.step_frame)
                payload = dict(frame.to_json_dict())
                payload["dropped"] = worker.buffer.dropped
                await ws.send_text(json.dumps(payload, sort_keys=True))
                sent += 1
                if interval_ms:
                    await asyncio.sleep(interval_ms / 1000.0)
        except WebSocketDisconnect:
            return
        await ws.close()

    return app


def serve(host: str = "127.0.0.1", port: int | None = None):
    import uvicorn
    uvicorn.run(create_app(), host=host,
                port=port if port is not None else port_from_env())
