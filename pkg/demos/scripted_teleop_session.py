#!/usr/bin/env python3
"""Drive the teleoperation server with a scripted client, no browser needed.

Starts the WebSocket service in-process, connects to it, steers the camera
down toward the cup while recording, and prints what the saved dataset
looks like. The same wire protocol serves the browser client; this script
stands in for a human with a gamepad.
"""
import asyncio
import json
import socket
from pathlib import Path

import numpy as np

from servoclone import ControlConfig, Scene, default_workspace, load
from servoclone.teleop import TeleopServer, unpack_frame
from servoclone.world import CameraIntrinsics

OUT = Path("teleop_session_out")


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


async def pilot(port):
    import websockets
    async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
        async def frames(n):
            got = 0
            while got < n:
                msg = await ws.recv()
                if isinstance(msg, bytes):
                    got += 1
                else:
                    status = json.loads(msg)
                    if status["type"] == "status":
                        print(f"    status: demo_time={status['demo_time']:.2f}s "
                              f"frames={status['frames']}")

        img, t, rec = unpack_frame(await ws.recv())
        print(f"  first frame: {img.shape[1]}x{img.shape[0]}, "
              f"sim_time={t:.2f}, recording={rec}")

        print("  recording a slow descent")
        await ws.send(json.dumps({"type": "record", "on": True}))
        await ws.send(json.dumps(
            {"type": "twist", "v": [0.0, 0.0, 0.08, 0.0, 0.0, 0.0], "seq": 1}))
        await frames(90)             # ~3 s of simulated flight

        print("  pausing the demo clock, repositioning")
        await ws.send(json.dumps({"type": "record", "on": False}))
        await ws.send(json.dumps(
            {"type": "twist", "v": [0.05, 0.0, -0.04, 0.0, 0.0, 0.0], "seq": 2}))
        await frames(45)

        print("  second recorded stretch")
        await ws.send(json.dumps({"type": "record", "on": True}))
        await frames(60)
        await ws.send(json.dumps({"type": "record", "on": False}))

        await ws.send(json.dumps({"type": "end_session"}))
        try:
            while True:
                await asyncio.wait_for(ws.recv(), timeout=2.0)
        except Exception:
            pass


async def main():
    scene = Scene()
    server = TeleopServer(scene, CameraIntrinsics.square(64),
                          ControlConfig(default_workspace(scene)), OUT,
                          real_time=False)
    port = free_port()
    serve = asyncio.create_task(server.serve_until_first_session(port=port))
    await asyncio.sleep(0.1)
    print(f"server listening on ws://127.0.0.1:{port}")
    await pilot(port)
    saved = await serve
    return saved


saved = asyncio.run(main())
ds = load(saved)
print(f"\nsaved dataset: {len(ds)} frames, {len(ds.episodes)} episodes, "
      f"{ds.total_demo_time:.2f} s of demo time -> {saved}")
for ep in ds.episodes:
    times = [f.demo_time for f in ep.frames]
    print(f"  episode {ep.id} ({ep.source}): {len(ep.frames)} frames, "
          f"demo_time {times[0]:.2f} .. {times[-1]:.2f} s")
