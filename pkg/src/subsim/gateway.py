"""Operator gateway: a websocket channel carrying JSON messages.

Each websocket frame is one JSON object with a `msg` discriminator:
outbound Snapshot / Event / ApprovalRequest / Error, inbound
ApprovalDecision / GoalOverride. The tick loop talks to the gateway only
through two thread-safe queues and never blocks on a client.
"""

from __future__ import annotations

import asyncio
import json
import queue
import threading


class Gateway:
    snapshot_every = 5

    def __init__(self, port: int, host: str = "127.0.0.1"):
        self.port = port
        self.host = host
        self._inbound: queue.Queue = queue.Queue()
        self._loop: asyncio.AbstractEventLoop | None = None
        self._clients: set = set()
        self._ready = threading.Event()
        self._stop: asyncio.Event | None = None
        self._thread = threading.Thread(target=self._run, daemon=True)

    # -- lifecycle ---------------------------------------------------------
    def start(self) -> "Gateway":
        self._thread.start()
        if not self._ready.wait(timeout=10):
            raise RuntimeError("gateway failed to start")
        return self

    def stop(self) -> None:
        if self._loop is None:
            return
        try:
            self._loop.call_soon_threadsafe(self._stop.set)
        except RuntimeError:
            return                      # loop already closed; nothing to stop
        self._thread.join(timeout=5)

    def _run(self) -> None:
        asyncio.run(self._serve())

    async def _serve(self) -> None:
        import websockets

        self._loop = asyncio.get_running_loop()
        self._stop = asyncio.Event()
        async with websockets.serve(self._handler, self.host, self.port):
            self._ready.set()
            await self._stop.wait()

    async def _handler(self, ws) -> None:
        self._clients.add(ws)
        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict) or "msg" not in msg:
                        raise ValueError("missing msg field")
                except (json.JSONDecodeError, ValueError) as exc:
                    await ws.send(json.dumps({"msg": "Error", "code": "malformed",
                                              "detail": str(exc)}))
                    continue
                msg["_client"] = id(ws)
                self._inbound.put(msg)
        except Exception:
            pass
        finally:
            self._clients.discard(ws)

    # -- tick-loop facing API ---------------------------------------------
    def drain_inbound(self) -> list[dict]:
        out = []
        while True:
            try:
                out.append(self._inbound.get_nowait())
            except queue.Empty:
                return out

    def _broadcast(self, payload: dict) -> None:
        if self._loop is None:
            return
        data = json.dumps(payload)
        self._loop.call_soon_threadsafe(self._broadcast_in_loop, data)

    def _broadcast_in_loop(self, data: str) -> None:
        for ws in list(self._clients):
            asyncio.ensure_future(self._safe_send(ws, data))

    async def _safe_send(self, ws, data: str) -> None:
        try:
            await ws.send(data)
        except Exception:
            self._clients.discard(ws)

    def publish_snapshot(self, snapshot: dict) -> None:
        self._broadcast(snapshot)

    def publish_event(self, event: dict) -> None:
        self._broadcast({"msg": "Event", **event})

    def publish_approval(self, req) -> None:
        self._broadcast({"msg": "ApprovalRequest", "id": req.id, "kind": req.kind,
                         "context": {k: v for k, v in req.context.items()
                                     if k not in ("announced", "goal_applied")},
                         "deadline_tick": req.deadline_tick,
                         "default": req.default})

    def send_error(self, client_id, code: str, detail: str) -> None:
        # errors go to the offending client when known, otherwise broadcast
        if self._loop is None:
            return
        data = json.dumps({"msg": "Error", "code": code, "detail": detail})
        def _send():
            for ws in list(self._clients):
                if client_id is None or id(ws) == client_id:
                    asyncio.ensure_future(self._safe_send(ws, data))
        self._loop.call_soon_threadsafe(_send)
