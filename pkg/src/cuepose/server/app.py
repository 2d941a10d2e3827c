"""WebSocket endpoint for the companion UI.

All messages are JSON objects with a ``type`` field. Client to server:
frame, session/start, session/confirm, train/start, mapping/set, mode.
Server to client: state, beat, samples, train/progress, train/report,
prediction, command, error. Unknown types get an error reply and the
connection stays open.
"""

from __future__ import annotations

import asyncio
import json
import logging

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .runtime import EngineRuntime

log = logging.getLogger(__name__)

CLIENT_TYPES = frozenset({
    "frame", "session/start", "session/confirm", "train/start", "mapping/set", "mode",
})

SEND_POLL_S = 0.02


def validate_client_message(msg) -> str | None:
    if not isinstance(msg, dict):
        return "message must be a JSON object"
    kind = msg.get("type")
    if kind not in CLIENT_TYPES:
        return f"unknown message type {kind!r}"
    if kind == "frame" and not isinstance(msg.get("landmarks"), list):
        return "frame message needs a landmarks array"
    return None


def client_message_to_event(msg: dict, conn_id: int) -> dict:
    ev = {k: v for k, v in msg.items()}
    if ev["type"] == "frame":
        ev.setdefault("src", "pose")
        ev.setdefault("t", 0)
    ev["_conn"] = conn_id
    return ev


def create_app(runtime: EngineRuntime) -> FastAPI:
    app = FastAPI(title="cuepose")

    @app.get("/")
    def status():
        return {
            "service": "cuepose",
            "mode": runtime.core.mode,
            "counters": dict(runtime.counters),
            "core_counters": dict(runtime.core.counters),
        }

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        conn_id, outbox = runtime.ui.register()
        log.info("ui connection %d open", conn_id)

        async def pump():
            while True:
                for msg in outbox.drain():
                    await ws.send_json(msg)
                await asyncio.sleep(SEND_POLL_S)

        sender = asyncio.create_task(pump())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_json({"type": "error", "message": "not valid JSON"})
                    continue
                error = validate_client_message(msg)
                if error is not None:
                    await ws.send_json({"type": "error", "message": error})
                    continue
                runtime.submit_event(client_message_to_event(msg, conn_id))
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            runtime.ui.unregister(conn_id)
            log.info("ui connection %d closed", conn_id)

    return app
