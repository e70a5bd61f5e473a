"""HTTP/WebSocket control surface for the running engine.

Three endpoints, all JSON:
  GET  /v1/snapshot   latest pipeline snapshot
  POST /v1/control    one control command; 400 on validation failure
  WS   /v1/live       snapshot push on tick change, throttled to 15/s

CORS is wide open: the console is served from anywhere (often file://)
and the API is deployment-local by assumption.
"""

from __future__ import annotations

import asyncio
import threading
import time

import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .engine import Engine, NotRunning, ValidationFailed

PUSH_INTERVAL_S = 1.0 / 15.0


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="mugeetion control", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.get("/v1/snapshot")
    def get_snapshot():
        try:
            snap = engine.snapshot()
        except NotRunning:
            return JSONResponse(status_code=409,
                                content={"error": "engine not running"})
        return snap

    @app.post("/v1/control")
    def post_control(cmd: dict):
        try:
            result = engine.apply_control(cmd)
        except NotRunning:
            return JSONResponse(status_code=409,
                                content={"error": "engine not running"})
        except ValidationFailed as e:
            return JSONResponse(status_code=400,
                                content={"ok": False, "error": str(e)})
        if not result.get("ok", False):
            return JSONResponse(status_code=400, content=result)
        return result

    @app.websocket("/v1/live")
    async def ws_live(ws: WebSocket):
        await ws.accept()
        last_tick = -1
        try:
            while True:
                try:
                    snap = engine.snapshot()
                except NotRunning:
                    break
                if snap is not None and snap["tick"] != last_tick:
                    last_tick = snap["tick"]
                    await ws.send_json(snap)
                await asyncio.sleep(PUSH_INTERVAL_S)
        except WebSocketDisconnect:
            pass

    return app


class ApiServer:
    """Uvicorn wrapped in a daemon thread with a clean shutdown."""

    def __init__(self, server: uvicorn.Server, thread: threading.Thread):
        self._server = server
        self._thread = thread

    @property
    def port(self) -> int:
        for s in self._server.servers:
            for sock in s.sockets:
                return sock.getsockname()[1]
        raise RuntimeError("server has no bound socket")

    def shutdown(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=3.0)


def start_api(engine: Engine, host: str = "127.0.0.1", port: int = 8765) -> ApiServer:
    """Serve the control app in a background thread; returns once bound.

    port 0 picks an ephemeral port; read it back from .port.
    """
    app = create_app(engine)
    cfg = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(cfg)
    thread = threading.Thread(target=server.run, name="mugeetion-api", daemon=True)
    thread.start()
    deadline = time.monotonic() + 5.0
    while not server.started and thread.is_alive():
        if time.monotonic() > deadline:
            raise RuntimeError(f"control API failed to start on {host}:{port}")
        time.sleep(0.01)
    if not thread.is_alive():
        raise RuntimeError(f"control API failed to start on {host}:{port}")
    return ApiServer(server, thread)
