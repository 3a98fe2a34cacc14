"""WebSocket teleoperation service: live frames out, twist commands in.

Wire protocol (all multi-byte fields little-endian):
  client -> server, JSON text:
    {"type": "twist", "v": [6 reals], "seq": int}   command, EE frame
    {"type": "record", "on": bool}                  start/stop recording
    {"type": "reset"}                               EE back to start pose
    {"type": "end_session"}                         save dataset and close
  server -> client, binary camera frames:
    16-byte header: magic "SVCF", uint16 width, uint16 height,
    float32 sim_time, uint8 recording flag, 3 pad bytes; then
    width*height*3 uint8 RGB.
  server -> client, JSON text:
    {"type": "status", "demo_time": s, "episodes": n, "frames": n}
    {"type": "error", "message": str}               malformed input, non-fatal

The commanded twist is held between messages and the safety correction is
always added before stepping, so a human teacher cannot leave the workspace
either. Recording follows the same active-time bookkeeping as scripted
demos: demo_time only advances while recording is on.
"""
from __future__ import annotations

import asyncio
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import ControlConfig, aggregate_twist
from .data import (DemoClock, DemoDataset, DemoFrame, Episode, quantize_image,
                   quantize_twist, save)
from .geometry import Frame, Pose, Twist
from .world import (CameraIntrinsics, GoalSpec, Scene, SimState, hover_point,
                    render, step, straight_down_quat)

FRAME_MAGIC = b"SVCF"
HEADER_FORMAT = "<4sHHfB3x"          # magic, width, height, sim_time, recording
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
STATUS_INTERVAL = 1.0                # seconds of sim time between status messages


def pack_frame(image_u8: np.ndarray, sim_time: float, recording: bool) -> bytes:
    h, w, _ = image_u8.shape
    header = struct.pack(HEADER_FORMAT, FRAME_MAGIC, w, h, sim_time, int(recording))
    return header + image_u8.tobytes()


def unpack_frame(blob: bytes) -> tuple[np.ndarray, float, bool]:
    """Parse a binary camera frame; the scripted test client uses this too."""
    if len(blob) < HEADER_SIZE:
        raise ValueError("frame shorter than header")
    magic, w, h, sim_time, rec = struct.unpack_from(HEADER_FORMAT, blob)
    if magic != FRAME_MAGIC:
        raise ValueError(f"bad frame magic {magic!r}")
    body = np.frombuffer(blob, dtype=np.uint8, offset=HEADER_SIZE)
    if body.size != w * h * 3:
        raise ValueError(f"frame body {body.size} bytes, expected {w * h * 3}")
    return body.reshape(h, w, 3), sim_time, bool(rec)


def default_start_pose(scene: Scene) -> Pose:
    # Hover height from a default GoalSpec; tolerances are irrelevant here.
    offset = np.array([0.0, -0.30, 0.20])
    return Pose(hover_point(scene, GoalSpec()) + offset, straight_down_quat())


@dataclass
class _Session:
    state: SimState
    start_pose: Pose
    clock: DemoClock = field(default_factory=DemoClock)
    command: Twist = field(default_factory=lambda: Twist.zero(Frame.EE))
    recording: bool = False
    ended: bool = False
    episodes: list = field(default_factory=list)
    pending_frames: list = field(default_factory=list)
    active_steps: int = 0
    frames_total: int = 0
    last_seq: int = -1

    def close_episode(self) -> None:
        if self.pending_frames:
            self.episodes.append(Episode(len(self.episodes),
                                         tuple(self.pending_frames), "teleop"))
            self.pending_frames = []


class TeleopServer:
    """One simulator session per client connection."""

    def __init__(self, scene: Scene, intr: CameraIntrinsics, ctrl: ControlConfig,
                 out_dir, record_rate: float = 3.0, start_pose: Pose | None = None,
                 real_time: bool = True):
        if not (0.0 < record_rate <= ctrl.rate):
            raise ValueError(f"record_rate must be in (0, {ctrl.rate}] Hz")
        self.scene = scene
        self.intr = intr
        self.ctrl = ctrl
        self.out_dir = Path(out_dir)
        self.record_rate = record_rate
        self.start_pose = start_pose or default_start_pose(scene)
        self.real_time = real_time
        self.saved_datasets = []     # paths, one per finished session

    async def serve_forever(self, host: str = "127.0.0.1", port: int = 8765):
        import websockets
        async with websockets.serve(self._handle, host, port, max_size=2**22):
            await asyncio.Future()

    async def serve_until_first_session(self, host: str = "127.0.0.1",
                                        port: int = 8765,
                                        on_listening=None) -> Path:
        """Run until one client finishes a session; returns the dataset dir.

        on_listening() fires after the socket is bound, so an announcement
        made from it is never ahead of the server actually accepting.
        """
        import websockets
        done = asyncio.Event()

        async def handle_once(ws):
            await self._handle(ws)
            done.set()

        async with websockets.serve(handle_once, host, port, max_size=2**22):
            if on_listening is not None:
                on_listening()
            await done.wait()
        return self.saved_datasets[-1]

    # -- per-connection machinery -------------------------------------------

    async def _handle(self, ws):
        session = _Session(SimState(self.start_pose, 0.0), self.start_pose)
        reader = asyncio.create_task(self._read_loop(ws, session))
        try:
            await self._sim_loop(ws, session)
            try:
                await ws.send(json.dumps({
                    "type": "status",
                    "demo_time": session.clock.demo_time,
                    "episodes": len(session.episodes) + bool(session.pending_frames),
                    "frames": session.frames_total}))
            except Exception:
                pass
        finally:
            reader.cancel()
            session.close_episode()
            self._save(session)

    async def _read_loop(self, ws, session: _Session):
        async for message in ws:
            try:
                self._apply_message(message, session)
            except (ValueError, KeyError, TypeError) as e:
                try:
                    await ws.send(json.dumps({"type": "error", "message": str(e)}))
                except Exception:
                    return
            if session.ended:
                return

    def _apply_message(self, message, session: _Session) -> None:
        if isinstance(message, bytes):
            raise ValueError("binary messages are not part of the protocol")
        msg = json.loads(message)
        kind = msg.get("type")
        if kind == "twist":
            v = np.asarray(msg["v"], dtype=np.float64)
            if v.shape != (6,) or not np.all(np.isfinite(v)):
                raise ValueError("twist v must be 6 finite numbers")
            seq = int(msg.get("seq", 0))
            if seq < session.last_seq:
                return               # stale command arriving out of order
            session.last_seq = seq
            session.command = Twist.from_array(v, Frame.EE)
        elif kind == "record":
            on = bool(msg["on"])
            if on != session.recording:
                session.recording = on
                if not on:
                    session.close_episode()
        elif kind == "reset":
            session.state = SimState(session.start_pose, session.state.sim_time)
            session.command = Twist.zero(Frame.EE)
        elif kind == "end_session":
            session.ended = True
        else:
            raise ValueError(f"unknown message type {kind!r}")

    async def _sim_loop(self, ws, session: _Session):
        dt = 1.0 / self.ctrl.rate
        spc = max(1, round(self.ctrl.rate / self.record_rate))
        next_status = 0.0
        while not session.ended:
            session.clock.recording = session.recording
            image = render(self.scene, session.state.ee_pose, self.intr)
            if session.recording:
                if session.active_steps % spc == 0:
                    session.pending_frames.append(DemoFrame(
                        quantize_image(image), quantize_twist(session.command),
                        session.clock.demo_time))
                    session.frames_total += 1
                session.active_steps += 1

            image_u8 = np.round(image * 255.0).astype(np.uint8)
            try:
                await ws.send(pack_frame(image_u8, session.state.sim_time,
                                         session.recording))
                if session.state.sim_time >= next_status:
                    await ws.send(json.dumps({
                        "type": "status",
                        "demo_time": session.clock.demo_time,
                        "episodes": len(session.episodes),
                        "frames": session.frames_total}))
                    next_status = session.state.sim_time + STATUS_INTERVAL
            except Exception:
                return               # client went away; cleanup saves the data

            applied = aggregate_twist(session.command, session.state, self.ctrl)
            session.state = step(session.state, applied, dt)
            session.clock.advance(dt)
            await asyncio.sleep(dt if self.real_time else 0)

    def _save(self, session: _Session) -> None:
        ds = DemoDataset(tuple(session.episodes), self.intr.width, self.intr.height,
                         self.record_rate, session.clock.demo_time)
        save(ds, self.out_dir)
        self.saved_datasets.append(self.out_dir)
