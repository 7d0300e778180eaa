"""WebSocket service for the operator console.

One scenario session per server. Clients speak JSON messages; every client
message gets exactly one reply carrying its msg_id. Mission edits are
queued and applied between simulation steps, so a run with a gateway
attached stays deterministic for a fixed message arrival schedule, and a
headless run is byte-identical to one with no clients connected.
"""

from __future__ import annotations

import asyncio
import json
import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from .coordination import BoundedWander, FollowPath, Idle, Mode
from .geometry import Polygon, Polyline, point_in_polygon
from .runner import ScenarioConfig, Simulation

log = logging.getLogger("skywatch.gateway")

DEFAULT_PORT = 8713
SNAPSHOT_RATE_DEFAULT = 10.0


class LiveRunner:
    """Owns the simulation and paces it; edits arrive via a queue."""

    def __init__(self, cfg: ScenarioConfig, time_scale: float = 1.0):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.cfg = cfg
        self.time_scale = time_scale
        self.run_state = "idle"
        self.edits: list[tuple[int, Mode]] = []
        self.path_counter = 0
        self._build()

    def _build(self):
        self.sim = Simulation(self.cfg)
        self.sim.emit_meta()
        self.latest = self.sim.snapshot()

    def reset(self):
        self._build()
        self.run_state = "idle"

    def queue_mode(self, robot_id: int, mode: Mode) -> None:
        self.edits.append((robot_id, mode))

    def _apply_edits(self):
        for robot_id, mode in self.edits:
            self.sim.install_mode(robot_id, mode)
        self.edits.clear()

    def snapshot(self) -> dict:
        snap = dict(self.latest)
        snap["run_state"] = self.run_state
        return snap

    async def run_loop(self):
        """Paced stepping; never blocks on observers."""
        dt_wall = self.cfg.rates.sim_dt / self.time_scale
        next_at = None
        while True:
            if self.run_state != "running":
                next_at = None
                self._apply_edits()
                self.latest = self.sim.snapshot()
                await asyncio.sleep(0.02)
                continue
            if self.sim.k >= self.sim.steps_total:
                self.run_state = "idle"
                continue
            loop = asyncio.get_running_loop()
            if next_at is None:
                next_at = loop.time()
            self._apply_edits()
            self.sim.step()
            self.latest = self.sim.snapshot()
            next_at += dt_wall
            delay = next_at - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                # Fell behind wall pace; yield without sleeping it off.
                next_at = loop.time()
                await asyncio.sleep(0)


@dataclass
class Session:
    runner: LiveRunner
    snapshot_rate_hz: float = SNAPSHOT_RATE_DEFAULT


def _err(msg_id, code: str, detail: str) -> dict:
    return {"msg_id": msg_id, "ok": False, "code": code, "detail": detail}


def _ack(msg_id, **extra) -> dict:
    return {"msg_id": msg_id, "ok": True, **extra}


def _ground_points(raw, msg_id) -> np.ndarray | dict:
    try:
        pts = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        return _err(msg_id, "bad_message", "points must be an array of [x, y] pairs")
    if pts.ndim != 2 or pts.shape[1] != 2:
        return _err(msg_id, "bad_message", "points must be an array of [x, y] pairs")
    if not np.isfinite(pts).all():
        return _err(msg_id, "bad_message", "points must be finite")
    return pts


def _known_robot(runner: LiveRunner, msg: dict, msg_id) -> int | dict:
    if "robot_id" not in msg:
        return _err(msg_id, "bad_message", "robot_id is required")
    try:
        rid = int(msg["robot_id"])
    except (TypeError, ValueError):
        return _err(msg_id, "bad_message", "robot_id must be an integer")
    if rid not in {r.id for r in runner.cfg.robots}:
        return _err(msg_id, "unknown_robot", f"no robot with id {rid}")
    return rid


def handle_client_msg(session: Session, msg: Any) -> dict:
    """Validate one client message; returns the reply to send back."""
    if not isinstance(msg, dict):
        return _err(None, "bad_message", "messages must be JSON objects")
    msg_id = msg.get("msg_id")
    kind = msg.get("type")
    runner = session.runner
    arena = runner.cfg.arena

    if kind == "set_path":
        rid = _known_robot(runner, msg, msg_id)
        if isinstance(rid, dict):
            return rid
        pts = _ground_points(msg.get("points"), msg_id)
        if isinstance(pts, dict):
            return pts
        if len(pts) < 2:
            return _err(msg_id, "too_few_points", "a path needs at least 2 points")
        for i, (x, y) in enumerate(pts):
            if not point_in_polygon(arena, (float(x), float(y))):
                return _err(msg_id, "outside_arena", f"point {i} is outside the arena")
        try:
            path = Polyline(pts)
        except ValueError as exc:
            return _err(msg_id, "bad_message", str(exc))
        runner.queue_mode(rid, FollowPath(path))
        runner.path_counter += 1
        return _ack(msg_id, path_id=runner.path_counter)

    if kind == "set_boundary":
        rid = _known_robot(runner, msg, msg_id)
        if isinstance(rid, dict):
            return rid
        pts = _ground_points(msg.get("points"), msg_id)
        if isinstance(pts, dict):
            return pts
        if len(pts) < 3:
            return _err(msg_id, "too_few_points", "a boundary needs at least 3 points")
        for i, (x, y) in enumerate(pts):
            if not point_in_polygon(arena, (float(x), float(y))):
                return _err(msg_id, "outside_arena", f"point {i} is outside the arena")
        try:
            poly = Polygon(pts)
        except ValueError as exc:
            return _err(msg_id, "invalid_polygon", str(exc))
        runner.queue_mode(rid, BoundedWander(poly))
        runner.path_counter += 1
        return _ack(msg_id, path_id=runner.path_counter)

    if kind == "set_mode":
        rid = _known_robot(runner, msg, msg_id)
        if isinstance(rid, dict):
            return rid
        mode = msg.get("mode")
        if mode == "idle":
            runner.queue_mode(rid, Idle())
            return _ack(msg_id)
        return _err(msg_id, "bad_message", "only mode 'idle' can be set directly")

    if kind == "start":
        if runner.sim.k >= runner.sim.steps_total:
            runner.reset()
        runner.run_state = "running"
        return _ack(msg_id, run_state=runner.run_state)

    if kind == "pause":
        if runner.run_state == "running":
            runner.run_state = "paused"
        return _ack(msg_id, run_state=runner.run_state)

    if kind == "reset":
        runner.reset()
        return _ack(msg_id, run_state=runner.run_state)

    if kind == "subscribe":
        rate = msg.get("rate_hz")
        if not isinstance(rate, (int, float)) or not 1.0 <= float(rate) <= 30.0:
            return _err(msg_id, "bad_message", "rate_hz must be in [1, 30]")
        session.snapshot_rate_hz = float(rate)
        return _ack(msg_id, rate_hz=session.snapshot_rate_hz)

    return _err(msg_id, "bad_message", f"unknown message type {kind!r}")


def hello_message(runner: LiveRunner) -> dict:
    cfg = runner.cfg
    return {
        "type": "hello",
        "homography": cfg.camera.h.m.ravel().tolist(),
        "arena": cfg.arena.vertices.tolist(),
        "width": cfg.camera.width,
        "height": cfg.camera.height,
        "robots": [r.id for r in cfg.robots],
        "run_state": runner.run_state,
    }


async def _client_session(runner: LiveRunner, websocket):
    session = Session(runner)
    await websocket.send(json.dumps(hello_message(runner)))

    async def sender():
        while True:
            await asyncio.sleep(1.0 / session.snapshot_rate_hz)
            await websocket.send(json.dumps(runner.snapshot()))

    send_task = asyncio.create_task(sender())
    try:
        async for raw in websocket:
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError:
                reply = _err(None, "bad_message", "not valid JSON")
            else:
                reply = handle_client_msg(session, msg)
            await websocket.send(json.dumps(reply))
    finally:
        send_task.cancel()


async def serve(cfg: ScenarioConfig, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                time_scale: float = 1.0, ready: asyncio.Event | None = None):
    """Run the gateway until cancelled."""
    import websockets

    runner = LiveRunner(cfg, time_scale=time_scale)
    loop_task = asyncio.create_task(runner.run_loop())
    async with websockets.serve(lambda ws: _client_session(runner, ws), host, port):
        log.info("gateway listening on ws://%s:%d", host, port)
        if ready is not None:
            ready.set()
        try:
            await asyncio.Future()
        finally:
            loop_task.cancel()
