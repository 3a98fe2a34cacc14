"""Demonstration recording, persistence and demo-time splits.

Demo time is the cumulative wall-clock of *active* recording: the clock only
advances while recording is on, so paused stretches contribute no frames and
no time, and checkpoint datasets are prefixes in demo time.

On-disk layout: a directory with manifest.json plus one frames.bin per
episode (in per-episode subdirectories). Each frame in frames.bin is
6 little-endian float32 twist components followed by width*height*3 uint8
pixels (pixel = round(255 * value)). The round-trip is bit-exact because
frames are quantized to this representation at capture time, mirroring an
8-bit camera.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Frame as TwistFrame
from .geometry import Twist
from .world import CameraIntrinsics, Scene, SimState, render, step

FORMAT_MAGIC = "SVCD1"
FORMAT_VERSION = 1
FRAME_TWIST_BYTES = 6 * 4


class DatasetError(ValueError):
    pass


class EmptyEpisodeError(DatasetError):
    pass


class EmptySplitError(DatasetError):
    pass


class DatasetLoadError(DatasetError):
    pass


class DatasetVersionError(DatasetLoadError):
    pass


class DatasetTruncatedError(DatasetLoadError):
    pass


class DatasetDimensionError(DatasetLoadError):
    pass


@dataclass(frozen=True)
class DemoFrame:
    """One captured (image, commanded twist, demo-time) sample."""

    image: np.ndarray            # (H, W, 3) float32 in [0,1], 8-bit quantized
    twist: Twist                 # teacher command, end-effector frame
    demo_time: float             # cumulative active demonstration seconds

    def __post_init__(self):
        if self.demo_time < 0:
            raise DatasetError("demo_time must be non-negative")
        if self.twist.frame is not TwistFrame.EE:
            raise DatasetError("recorded twists must be in the end-effector frame")


@dataclass(frozen=True)
class Episode:
    id: int
    frames: tuple
    source: str = "expert"       # "expert" or "teleop"

    def __post_init__(self):
        if len(self.frames) == 0:
            raise EmptyEpisodeError("episode has no frames")
        times = [f.demo_time for f in self.frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DatasetError("demo_time must be strictly increasing within an episode")


@dataclass(frozen=True)
class DemoDataset:
    episodes: tuple
    width: int
    height: int
    record_rate: float
    total_demo_time: float

    def __post_init__(self):
        for ep in self.episodes:
            for f in ep.frames:
                if f.image.shape != (self.height, self.width, 3):
                    raise DatasetDimensionError(
                        f"frame shape {f.image.shape} != dataset dims "
                        f"({self.height}, {self.width}, 3)")
        max_t = max((ep.frames[-1].demo_time for ep in self.episodes), default=0.0)
        if self.total_demo_time < max_t - 1e-9:
            raise DatasetError("total_demo_time below last frame demo_time")

    def __len__(self) -> int:
        return sum(len(ep.frames) for ep in self.episodes)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All frames as (N, H, W, 3) float32 images and (N, 6) float32 twists."""
        n = len(self)
        images = np.empty((n, self.height, self.width, 3), dtype=np.float32)
        twists = np.empty((n, 6), dtype=np.float32)
        i = 0
        for ep in self.episodes:
            for f in ep.frames:
                images[i] = f.image
                twists[i] = f.twist.as_array()
                i += 1
        return images, twists


def quantize_image(img: np.ndarray) -> np.ndarray:
    """Snap a float image to the 8-bit grid used on disk."""
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return (u8.astype(np.float32) / np.float32(255.0))


def quantize_twist(t: Twist) -> Twist:
    return Twist.from_array(t.as_array().astype(np.float32).astype(np.float64),
                            t.frame)


class DemoClock:
    """Accumulates active-recording demonstration time across episodes."""

    def __init__(self, demo_time: float = 0.0, recording: bool = False):
        self.demo_time = float(demo_time)
        self.recording = bool(recording)

    def advance(self, dt: float) -> None:
        if self.recording:
            self.demo_time += dt


def record_episode(policy_fn, state: SimState, scene: Scene, intr: CameraIntrinsics,
                   clock: DemoClock, *, control_rate: float = 30.0,
                   record_rate: float = 3.0, max_duration: float = 60.0,
                   stop_fn=None, recording_fn=None, execute_fn=None,
                   episode_id: int = 0, source: str = "expert") -> tuple[Episode, SimState]:
    """Run the control loop, capturing frames at record_rate while recording.

    policy_fn(state) -> Twist is the teacher; the captured twist is exactly
    what the teacher commanded and the captured image is what it saw.
    execute_fn(state, twist) -> Twist maps the command to the twist actually
    applied (the runtime adds its safety correction there); the label stays
    the raw command. recording_fn(sim_time) -> bool can pause recording; the
    capture cadence counts active steps only, so pauses do not skew the
    effective rate.
    """
    if not (0.0 < record_rate <= control_rate):
        raise ValueError(f"record_rate must be in (0, {control_rate}] Hz")
    dt = 1.0 / control_rate
    steps_per_capture = max(1, round(control_rate / record_rate))
    frames = []
    active_steps = 0
    n_steps = int(round(max_duration * control_rate))
    for _ in range(n_steps):
        rec = True if recording_fn is None else bool(recording_fn(state.sim_time))
        clock.recording = rec
        twist = policy_fn(state)
        if rec:
            if active_steps % steps_per_capture == 0:
                img = quantize_image(render(scene, state.ee_pose, intr))
                frames.append(DemoFrame(img, quantize_twist(twist), clock.demo_time))
            active_steps += 1
        applied = twist if execute_fn is None else execute_fn(state, twist)
        state = step(state, applied, dt)
        clock.advance(dt)
        if stop_fn is not None and stop_fn(state):
            break
    if not frames:
        raise EmptyEpisodeError("no frames captured (recording never active?)")
    return Episode(episode_id, tuple(frames), source), state


def split_by_time(ds: DemoDataset, minutes: float) -> DemoDataset:
    """Keep exactly the frames with demo_time <= minutes * 60."""
    if minutes <= 0:
        raise ValueError("split minutes must be positive")
    cutoff = minutes * 60.0
    episodes = []
    for ep in ds.episodes:
        kept = tuple(f for f in ep.frames if f.demo_time <= cutoff)
        if kept:
            episodes.append(Episode(ep.id, kept, ep.source))
    if not episodes:
        raise EmptySplitError(f"no frames within the first {minutes} minutes")
    return DemoDataset(tuple(episodes), ds.width, ds.height, ds.record_rate,
                       min(ds.total_demo_time, cutoff))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save(ds: DemoDataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for i, ep in enumerate(ds.episodes):
        sub = out / f"ep{i:04d}"
        sub.mkdir(exist_ok=True)
        with open(sub / "frames.bin", "wb") as f:
            for fr in ep.frames:
                f.write(fr.twist.as_array().astype("<f4").tobytes())
                pixels = np.round(fr.image * 255.0).astype(np.uint8)
                f.write(pixels.tobytes())
        index.append({"id": ep.id, "source": ep.source, "dir": sub.name,
                      "num_frames": len(ep.frames),
                      "demo_times": [fr.demo_time for fr in ep.frames]})
    manifest = {"magic": FORMAT_MAGIC, "version": FORMAT_VERSION,
                "width": ds.width, "height": ds.height,
                "record_rate": ds.record_rate,
                "total_demo_time": ds.total_demo_time, "episodes": index}
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)


def load(in_dir) -> DemoDataset:
    root = Path(in_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetLoadError(f"{root}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetLoadError(f"{root}: corrupt manifest: {e}") from e
    if manifest.get("magic") != FORMAT_MAGIC:
        raise DatasetVersionError(f"{root}: bad magic {manifest.get('magic')!r}")
    if manifest.get("version") != FORMAT_VERSION:
        raise DatasetVersionError(f"{root}: unsupported version "
                                  f"{manifest.get('version')!r}")
    width, height = int(manifest["width"]), int(manifest["height"])
    frame_bytes = FRAME_TWIST_BYTES + width * height * 3
    episodes = []
    for entry in manifest["episodes"]:
        blob = (root / entry["dir"] / "frames.bin").read_bytes()
        n = entry["num_frames"]
        if len(blob) != n * frame_bytes:
            raise DatasetTruncatedError(
                f"{root}/{entry['dir']}: expected {n * frame_bytes} bytes "
                f"for {n} frames, found {len(blob)}")
        if len(entry["demo_times"]) != n:
            raise DatasetLoadError(f"{root}/{entry['dir']}: demo_times length "
                                   f"!= num_frames")
        frames = []
        for k in range(n):
            off = k * frame_bytes
            tw = np.frombuffer(blob, dtype="<f4", count=6, offset=off)
            px = np.frombuffer(blob, dtype=np.uint8, count=width * height * 3,
                               offset=off + FRAME_TWIST_BYTES)
            img = (px.astype(np.float32) / np.float32(255.0)).reshape(height, width, 3)
            frames.append(DemoFrame(img, Twist.from_array(tw.astype(np.float64)),
                                    entry["demo_times"][k]))
        episodes.append(Episode(entry["id"], tuple(frames), entry["source"]))
    return DemoDataset(tuple(episodes), width, height,
                       float(manifest["record_rate"]),
                       float(manifest["total_demo_time"]))
