"""Teleoperation bridge: one live simulated episode per session, driven by a
human over WebSocket.

The session broadcasts, every control period, exactly the information the
learned planner sees (pooled sectors, estimated pose, goal polar); the true
pose and the map never cross the wire. One driver holds control; everyone
else spectates. The world advances on the fixed-step engine regardless of
network timing, paced to wall clock by time_scale.
"""
from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .harness import (
    EVENT_ABORTED, EVENT_COLLISION, EVENT_GOAL, EVENT_TIMEOUT, EpisodeEngine,
    UwbConfig,
)
from .perception import PerceptionConfig
from .simcore import ScenarioSpec, SimParams
from .uwb import AnchorSet, RangingNoiseModel

PROTOCOL_VERSION = 1
SEND_QUEUE_LIMIT = 32

_STATE_FIELDS = {"type", "seq", "t", "sectors", "pose", "goal", "waypoint",
                 "stamp"}
_POSE_FIELDS = {"x", "y", "theta"}
_GOAL_FIELDS = {"distance", "heading"}


def wire_schema() -> dict:
    """The published wire schema shipped with the package."""
    ref = resources.files("uwbnav").joinpath("schema/wire_schema.json")
    return json.loads(ref.read_text())


def validate_state_frame(msg: dict) -> list[str]:
    """Schema-level violations in a state frame; empty list means valid.

    Enforces the information-parity rule: only the whitelisted fields may
    appear, so the true pose or map geometry cannot leak by construction.
    """
    problems = []
    if msg.get("type") != "state":
        problems.append("type must be 'state'")
    extra = set(msg) - _STATE_FIELDS
    if extra:
        problems.append(f"forbidden fields: {sorted(extra)}")
    missing = _STATE_FIELDS - set(msg)
    if missing:
        problems.append(f"missing fields: {sorted(missing)}")
    if isinstance(msg.get("pose"), dict) and set(msg["pose"]) != _POSE_FIELDS:
        problems.append("pose must have exactly x, y, theta")
    if isinstance(msg.get("goal"), dict) and set(msg["goal"]) != _GOAL_FIELDS:
        problems.append("goal must have exactly distance, heading")
    if isinstance(msg.get("sectors"), list) and len(msg["sectors"]) != 60:
        problems.append("sectors must have 60 entries")
    return problems


@dataclass
class TeleopSettings:
    scenario: ScenarioSpec
    anchors: Optional[AnchorSet] = None
    noise: RangingNoiseModel = field(default_factory=lambda: RangingNoiseModel(sigma=0.0))
    uwb: UwbConfig = field(default_factory=UwbConfig)
    sim: SimParams = field(default_factory=SimParams)
    perception: Optional[PerceptionConfig] = None
    time_scale: float = 1.0
    out_dir: Optional[Path] = None
    seed: int = 0


class _Client:
    def __init__(self, socket, role: str, name: str):
        self.socket = socket
        self.role = role
        self.name = name
        self.queue: asyncio.Queue[str] = asyncio.Queue(maxsize=SEND_QUEUE_LIMIT)
        self.sender: Optional[asyncio.Task] = None

    def offer(self, text: str) -> bool:
        """Queue a frame; False means the consumer is too slow and must go."""
        try:
            self.queue.put_nowait(text)
            return True
        except asyncio.QueueFull:
            return False

    async def run_sender(self):
        while True:
            text = await self.queue.get()
            await self.socket.send(text)


class Session:
    """One scenario episode shared by a driver and any number of spectators."""

    def __init__(self, session_id: str, settings: TeleopSettings):
        self.id = session_id
        self.settings = settings
        uwb = settings.uwb
        if settings.anchors is not None and uwb.anchors is None:
            import dataclasses
            uwb = dataclasses.replace(uwb, anchors=settings.anchors)
        self.engine = EpisodeEngine(
            settings.scenario, uwb, settings.noise, settings.seed,
            settings.sim, settings.perception, planner_id="human:anonymous")
        self.status = "lobby"
        self.driver: Optional[_Client] = None
        self.spectators: list[_Client] = []
        self.latest_cmd = (0.0, 0.0)
        self.loop_task: Optional[asyncio.Task] = None
        self.seq = 0
        self.log_path: Optional[Path] = None

    # -- connection management -------------------------------------------

    def clients(self) -> list[_Client]:
        out = list(self.spectators)
        if self.driver is not None:
            out.append(self.driver)
        return out

    def join(self, client: _Client) -> str:
        """Grant driver if requested and free, else spectator."""
        if client.role == "driver" and self.driver is None \
                and self.status != "finished":
            self.driver = client
            self.engine.log.planner_id = f"human:{client.name}"
            if self.status == "lobby":
                self.status = "running"
                self.loop_task = asyncio.get_running_loop().create_task(
                    self._run_world())
            return "driver"
        self.spectators.append(client)
        return "spectator"

    def leave(self, client: _Client) -> None:
        if client is self.driver:
            self.driver = None
            if self.status == "running":
                # driver lost mid-run: abort and finish
                self.engine.abort()
                self._finish("aborted")
        elif client in self.spectators:
            self.spectators.remove(client)

    # -- world loop --------------------------------------------------------

    def broadcast(self, msg: dict) -> None:
        text = json.dumps(msg, sort_keys=True)
        for client in self.clients():
            if not client.offer(text):
                # bounded queue overflowed: drop the slow consumer
                if client.sender:
                    client.sender.cancel()
                self.leave(client)

    def state_frame(self) -> dict:
        inp = self.engine.observe()
        self.seq += 1
        return {
            "type": "state",
            "seq": self.seq,
            "t": self.engine.state.t,
            "sectors": [round(float(r), 4) for r in inp.obs.sectors],
            "pose": {"x": inp.est_pose[0], "y": inp.est_pose[1],
                     "theta": inp.est_pose[2]},
            "goal": {"distance": inp.obs.goal_distance,
                     "heading": inp.obs.goal_heading},
            "waypoint": self.engine.waypoint,
            "stamp": time.time(),
        }

    async def _run_world(self):
        period = self.settings.sim.control_period / max(self.settings.time_scale,
                                                        1e-6)
        try:
            while self.status == "running" and not self.engine.finished:
                self.broadcast(self.state_frame())
                await asyncio.sleep(period)
                if self.status != "running":
                    break
                events = self.engine.apply(*self.latest_cmd)
                for t, name in events:
                    self.broadcast({"type": "event", "t": t, "name": name})
            if self.status == "running":
                term = self.engine.log.terminal_event
                outcome = {EVENT_GOAL: "goal", EVENT_COLLISION: "collision",
                           EVENT_TIMEOUT: "timeout"}.get(
                               term[1] if term else EVENT_ABORTED, "aborted")
                self._finish(outcome)
        except asyncio.CancelledError:
            if self.status == "running":
                self.engine.abort()
                self._finish("aborted")
            raise

    def _finish(self, outcome: str) -> None:
        self.status = "finished"
        if self.settings.out_dir is not None:
            self.settings.out_dir.mkdir(parents=True, exist_ok=True)
            self.log_path = Path(self.settings.out_dir) / f"session_{self.id}.jsonl"
            self.engine.log.write(self.log_path)
        self.broadcast({"type": "result", "outcome": outcome,
                        "t": self.engine.state.t})

    # -- inbound messages --------------------------------------------------

    def handle_command(self, client: _Client, msg: dict) -> Optional[dict]:
        """Apply a driver command; returns an error/warning frame if any."""
        if client is not self.driver:
            return {"type": "error", "code": "not_driver",
                    "message": "only the driver may send commands"}
        if self.status != "running":
            return {"type": "error", "code": "not_running",
                    "message": f"session is {self.status}"}
        try:
            v = float(msg["v"])
            w = float(msg["w"])
        except (KeyError, TypeError, ValueError):
            return {"type": "error", "code": "bad_command",
                    "message": "command needs numeric v and w"}
        cv = min(max(v, 0.0), 1.0)
        cw = min(max(w, -1.0), 1.0)
        self.latest_cmd = (cv, cw)  # zero-order hold until the next command
        if cv != v or cw != w:
            return {"type": "error", "code": "clipped",
                    "message": f"command clipped to ({cv}, {cw})"}
        return None


class TeleopServer:
    def __init__(self, settings: TeleopSettings):
        self.settings = settings
        self.sessions: dict[str, Session] = {}

    def session_for(self, path: str) -> Optional[Session]:
        parts = [p for p in path.split("?")[0].split("/") if p]
        if len(parts) != 2 or parts[0] != "session":
            return None
        sid = parts[1]
        if sid not in self.sessions:
            self.sessions[sid] = Session(sid, self.settings)
        return self.sessions[sid]

    async def handler(self, socket):
        path = socket.request.path
        session = self.session_for(path)
        if session is None:
            await socket.send(json.dumps({
                "type": "error", "code": "bad_path",
                "message": "connect to /session/{id}"}))
            await socket.close()
            return
        client: Optional[_Client] = None
        try:
            hello_raw = await socket.recv()
            try:
                hello = json.loads(hello_raw)
            except json.JSONDecodeError:
                hello = {}
            if hello.get("type") != "hello" \
                    or hello.get("protocol") != PROTOCOL_VERSION:
                await socket.send(json.dumps({
                    "type": "error", "code": "bad_hello",
                    "message": "first frame must be a protocol-1 hello"}))
                await socket.close()
                return
            role_req = hello.get("role", "spectator")
            name = str(hello.get("name", "anonymous"))[:64]
            client = _Client(socket, role_req, name)
            granted = session.join(client)
            if role_req == "driver" and granted != "driver":
                client.offer(json.dumps({
                    "type": "error", "code": "driver_taken",
                    "message": "a driver is already connected; spectating"}))
            client.sender = asyncio.get_running_loop().create_task(
                client.run_sender())
            client.offer(json.dumps({
                "type": "hello", "protocol": PROTOCOL_VERSION,
                "session": session.id, "role": granted,
                "control_period": self.settings.sim.control_period,
                "n_sectors": 60,
                "max_range": session.engine.pcfg.max_range,
                "goal_radius": self.settings.scenario.goal_radius,
                "waypoints_total": len(self.settings.scenario.goals),
            }, sort_keys=True))

            async for raw in socket:
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("frame must be an object")
                except (json.JSONDecodeError, ValueError) as e:
                    client.offer(json.dumps({
                        "type": "error", "code": "bad_message",
                        "message": str(e)}))
                    continue
                if msg.get("type") == "command":
                    reply = session.handle_command(client, msg)
                    if reply is not None:
                        client.offer(json.dumps(reply))
                else:
                    client.offer(json.dumps({
                        "type": "error", "code": "unknown_type",
                        "message": f"unsupported type {msg.get('type')!r}"}))
        finally:
            if client is not None:
                if client.sender:
                    client.sender.cancel()
                session.leave(client)

    async def start(self, port: int = 0, host: str = "localhost"):
        """Start serving; returns (server, bound_port). Caller closes."""
        import websockets
        server = await websockets.serve(self.handler, host, port)
        bound = server.sockets[0].getsockname()[1]
        return server, bound

    async def serve_forever(self, port: int, host: str = "localhost"):
        server, _ = await self.start(port, host)
        async with server:
            await asyncio.Future()
