"""WebSocket service exposing one live master/slave session.

A single client drags the master end-effector and watches the scene;
the server runs the coupled loop at 20 Hz wall-clock, streams a state
message per tick, and records demonstrations on request in the same
file format the scripted collector produces.

Protocol: JSON objects, each with a "type" field.
  client -> server: drag {x, y, theta} | record {action, scene?} | reset {position, color, fill}
  server -> client: info | state | ack | error
Unknown or malformed messages get an error reply naming the offending
field; they never end the connection.
"""

from __future__ import annotations

import asyncio
import base64
import json
import time
from pathlib import Path

import numpy as np
import websockets
from websockets.exceptions import ConnectionClosed

from scoop_lfd.bilateral import BilateralConfig, BilateralState, teleop_tick
from scoop_lfd.demos import FRAME_PERIOD, capture_frame, sequence_meta
from scoop_lfd.sim import (
    BOWL_COLORS,
    BOWL_POSITIONS,
    FILL_LEVELS,
    SceneConfig,
    evaluate_run,
    initial_state,
    scene_for,
    wrap_angle,
)
from scoop_lfd.sim.kinematics import fk
from scoop_lfd.store import DemoSequence, save_sequence, write_manifest

PROTOCOL_VERSION = 1
TICK_HZ = 20.0


def frame_to_wire(image: np.ndarray) -> dict:
    """f32 (C, H, W) in [0,1] -> base64 raw RGB rows plus dims."""
    c, h, w = image.shape
    rgb = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    raw = np.ascontiguousarray(rgb.transpose(1, 2, 0)).tobytes()
    return {
        "frame": base64.b64encode(raw).decode("ascii"),
        "width": w,
        "height": h,
        "channels": c,
    }


def wire_to_frame(msg: dict) -> np.ndarray:
    raw = base64.b64decode(msg["frame"])
    h, w, c = msg["height"], msg["width"], msg["channels"]
    rgb = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, c)
    return rgb.transpose(2, 0, 1).astype(np.float32) / 255.0


class BridgeSession:
    """Scene, coupled master/slave state, and the recording buffer."""

    def __init__(self, scene: SceneConfig | None = None, record_dir="recordings"):
        self.record_dir = Path(record_dir)
        self.tick = 0
        self.saved = 0
        self._manifest_entries: list[dict] = []
        self._reset_scene(scene or scene_for(3))

    def _reset_scene(self, scene: SceneConfig) -> None:
        self.scene = scene
        self.sim = initial_state(scene)
        self.initial_units = self.sim.in_bowl
        self.bstate = BilateralState.at(fk(self.sim.q, scene).as_array())
        self.target = self.bstate.pose.copy()
        self.recording = False
        self.frames = []
        self.trace = []
        self.last_force = np.zeros(3)

    def clamp_target(self, x: float, y: float, theta: float) -> np.ndarray:
        """Pull an arbitrary pose back inside the arm's comfortable reach."""
        base = np.array([self.scene.base_x, self.scene.base_y], dtype=np.float64)
        reach = 0.95 * self.scene.n_joints * self.scene.link_length
        v = np.array([x, y], dtype=np.float64) - base
        r = float(np.hypot(v[0], v[1]))
        if r > reach:
            v *= reach / r
        p = base + v
        p[1] = max(p[1], 0.0)
        return np.array([p[0], p[1], wrap_angle(theta)])

    def step(self) -> None:
        if self.recording and self.tick % FRAME_PERIOD == 0:
            self.frames.append(capture_frame(self.scene, self.sim, self.initial_units))
        self.bstate, self.sim, info, f_env = teleop_tick(
            self.scene, BilateralConfig(), self.bstate, self.sim, self.target
        )
        self.last_force = f_env
        if self.recording:
            self.trace.append((self.sim, info))
        self.tick += 1

    def start_recording(self) -> None:
        self.recording = True
        self.frames = []
        self.trace = []

    def stop_recording(self) -> Path | None:
        """Save the buffered demonstration; None when nothing was captured.

        The directory doubles as a dataset: each save refreshes its
        manifest so recorded demos load with their scene metadata.
        """
        self.recording = False
        if not self.frames:
            return None
        outcome = evaluate_run(self.scene, self.initial_units, self.trace)
        meta = sequence_meta(self.scene, outcome)
        meta["source"] = "bridge"
        seq = DemoSequence(frames=self.frames, meta=meta)
        self.record_dir.mkdir(parents=True, exist_ok=True)
        path = self.record_dir / f"bridge_{int(time.time())}_{self.saved:03d}.lfds"
        save_sequence(path, seq)
        self._manifest_entries.append({"file": path.name, "meta": meta})
        write_manifest(self.record_dir, self._manifest_entries)
        self.saved += 1
        self.frames = []
        self.trace = []
        return path

    def state_message(self) -> dict:
        frame = capture_frame(self.scene, self.sim, self.initial_units)
        tip = fk(np.asarray(self.sim.q), self.scene)
        msg = {
            "type": "state",
            "tick": self.tick,
            "joints": [round(float(v), 6) for v in self.sim.q],
            "master": [round(float(v), 6) for v in self.bstate.pose],
            "tip": [round(float(v), 6) for v in (tip.x, tip.y, tip.theta)],
            "f_env": [round(float(v), 4) for v in self.last_force],
            "level": round(float(frame.material_level), 6),
            "in_bowl": self.sim.in_bowl,
            "on_spoon": self.sim.on_spoon,
            "recording": self.recording,
        }
        msg.update(frame_to_wire(frame.image))
        return msg

    def info_message(self) -> dict:
        return {
            "type": "info",
            "protocol": PROTOCOL_VERSION,
            "tick_hz": TICK_HZ,
            "image_hw": self.scene.image_hw,
            "dt": self.scene.dt,
            "frame_period": FRAME_PERIOD,
            "view": {
                "x0": self.scene.view_x0,
                "y0": self.scene.view_y0,
                "extent": self.scene.view_extent,
            },
            "positions": len(BOWL_POSITIONS),
            "colors": list(BOWL_COLORS),
            "fills": list(FILL_LEVELS),
            "scene": {
                "bowl_x": self.scene.bowl_x,
                "color": self.scene.bowl_color,
                "fill": self.scene.fill,
            },
            "recording": self.recording,
        }


def _error(message: str, field: str | None = None) -> dict:
    msg = {"type": "error", "message": message}
    if field:
        msg["field"] = field
    return msg


def _require_number(msg: dict, field: str):
    if field not in msg:
        return None, _error(f"message is missing field {field!r}", field)
    value = msg[field]
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not np.isfinite(value):
        return None, _error(f"field {field!r} must be a finite number", field)
    return float(value), None


def apply_message(session: BridgeSession, msg: dict) -> dict | None:
    """Apply one parsed client message; returns the reply, if any.

    Called between ticks only, so every mutation lands atomically.
    """
    kind = msg.get("type")
    if kind == "drag":
        values = []
        for field in ("x", "y", "theta"):
            value, err = _require_number(msg, field)
            if err:
                return err
            values.append(value)
        session.target = session.clamp_target(*values)
        return None
    if kind == "record":
        action = msg.get("action")
        if action == "start":
            scene_fields = {k: msg[k] for k in ("position", "color", "fill") if k in msg}
            if scene_fields:
                reply = _apply_reset(session, msg)
                if reply.get("type") == "error":
                    return reply
            session.start_recording()
            return {"type": "ack", "of": "record", "recording": True}
        if action == "stop":
            path = session.stop_recording()
            if path is None:
                return _error("recording had no frames; nothing saved", "action")
            return {"type": "ack", "of": "record", "recording": False, "file": str(path)}
        return _error("record action must be 'start' or 'stop'", "action")
    if kind == "reset":
        return _apply_reset(session, msg)
    return _error(f"unknown message type {kind!r}", "type")


def _apply_reset(session: BridgeSession, msg: dict) -> dict:
    position = msg.get("position", 3)
    color = msg.get("color", "yellow")
    fill = msg.get("fill", "high")
    if not isinstance(position, int) or not 0 <= position < len(BOWL_POSITIONS):
        return _error(f"position must be an integer in 0..{len(BOWL_POSITIONS) - 1}", "position")
    if color not in BOWL_COLORS:
        return _error(f"color must be one of {list(BOWL_COLORS)}", "color")
    if fill not in FILL_LEVELS:
        return _error(f"fill must be one of {list(FILL_LEVELS)}", "fill")
    dropped = session.recording
    session._reset_scene(scene_for(position, color, fill))
    reply = {"type": "ack", "of": "reset", "position": position, "color": color, "fill": fill}
    if dropped:
        reply["note"] = "recording discarded by reset"
    return reply


class BridgeServer:
    """One session, one client, 20 Hz server-paced streaming."""

    def __init__(self, scene: SceneConfig | None = None, record_dir="recordings", tick_hz: float = TICK_HZ):
        self.session = BridgeSession(scene, record_dir)
        self.period = 1.0 / tick_hz
        self._client = None
        self._pending: list[dict] = []

    async def handle(self, ws) -> None:
        if self._client is not None:
            await ws.send(json.dumps(_error("busy: another operator is connected")))
            await ws.close()
            return
        self._client = ws
        self._pending = []
        try:
            await ws.send(json.dumps(self.session.info_message()))
            recv = asyncio.ensure_future(self._recv_loop(ws))
            try:
                await self._tick_loop(ws)
            finally:
                recv.cancel()
        except ConnectionClosed:
            pass
        finally:
            self._client = None

    async def _recv_loop(self, ws) -> None:
        async for raw in ws:
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError:
                await ws.send(json.dumps(_error("message is not valid JSON")))
                continue
            if not isinstance(msg, dict):
                await ws.send(json.dumps(_error("message must be a JSON object with a 'type'")))
                continue
            self._pending.append(msg)

    async def _tick_loop(self, ws) -> None:
        loop = asyncio.get_event_loop()
        next_t = loop.time()
        while True:
            pending, self._pending = self._pending, []
            replies = [apply_message(self.session, msg) for msg in pending]
            self.session.step()
            for reply in replies:
                if reply is not None:
                    await ws.send(json.dumps(reply))
            await ws.send(json.dumps(self.session.state_message()))
            next_t += self.period
            delay = next_t - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                # fell behind; rebase rather than bursting to catch up
                next_t = loop.time()

    async def run(self, host: str = "127.0.0.1", port: int = 8765) -> None:
        async with websockets.serve(self.handle, host, port):
            await asyncio.Future()


def serve(host: str = "127.0.0.1", port: int = 8765, record_dir="recordings") -> None:
    """Blocking entry point used by the command line."""
    server = BridgeServer(record_dir=record_dir)
    print(f"teleop bridge on ws://{host}:{port} (one client; ctrl-c stops)")
    try:
        asyncio.run(server.run(host, port))
    except KeyboardInterrupt:
        print("stopped")


if __name__ == "__main__":
    serve()
