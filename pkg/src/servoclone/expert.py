"""Scripted teacher with ground-truth state access.

Proportional control toward the hover point with the camera axis driven to
straight-down, clamped speeds and optional Gaussian noise on the linear
command. Also samples the varied initial poses (near/far bands around the
goal) used for demonstrations and evaluation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .control import ControlConfig, aggregate_twist
from .data import DemoClock, DemoDataset, record_episode
from .geometry import (Frame, Pose, Twist, quat_conjugate, quat_exp, quat_multiply,
                       quat_rotate)
from .workspace import Volume, contains
from .world import (CameraIntrinsics, GoalSpec, Scene, SimState, hover_point,
                    is_success, render, straight_down_quat)

DOWN = np.array([0.0, 0.0, -1.0])


class Band(enum.Enum):
    NEAR = "near"
    FAR = "far"


@dataclass(frozen=True)
class ExpertConfig:
    kp_lin: float = 1.5          # 1/s
    kp_ang: float = 1.5          # 1/s
    max_lin: float = 0.25        # m/s
    max_ang: float = 0.8         # rad/s
    stop_when_success: bool = True
    noise_std: float = 0.01      # m/s, per linear axis

    def __post_init__(self):
        if min(self.kp_lin, self.kp_ang, self.max_lin, self.max_ang) <= 0:
            raise ValueError("expert gains and limits must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class SamplerConfig:
    near_band: tuple = (0.10, 0.25)   # meters from the hover point
    far_band: tuple = (0.30, 0.60)
    max_tilt: float = np.deg2rad(25.0)     # initial optical-axis error
    max_polar: float = np.deg2rad(50.0)    # start direction cone from vertical
    min_cup_pixels: int = 8                # visibility rejection threshold
    max_tries: int = 1000


def _clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = np.linalg.norm(v)
    if n > limit:
        return v * (limit / n)
    return v


def expert_twist(state: SimState, scene: Scene, goal: GoalSpec, cfg: ExpertConfig,
                 rng: np.random.Generator | None = None) -> Twist:
    """Teacher command for the current state, in the end-effector frame."""
    if cfg.stop_when_success and is_success(state, scene, goal):
        return Twist.zero(Frame.EE)
    pose = state.ee_pose
    q_inv = quat_conjugate(pose.quat)

    err_world = hover_point(scene, goal) - pose.position
    linear = _clamp_norm(cfg.kp_lin * quat_rotate(q_inv, err_world), cfg.max_lin)

    axis_world = quat_rotate(pose.quat, np.array([0.0, 0.0, 1.0]))
    cross = np.cross(axis_world, DOWN)
    s = np.linalg.norm(cross)
    c = float(np.dot(axis_world, DOWN))
    if s < 1e-12:
        # Aligned or anti-aligned; anti-aligned picks an arbitrary flip axis.
        omega_world = np.zeros(3) if c > 0 else np.array([np.pi, 0.0, 0.0])
    else:
        omega_world = (cross / s) * np.arctan2(s, c)
    angular = _clamp_norm(cfg.kp_ang * quat_rotate(q_inv, omega_world), cfg.max_ang)

    if cfg.noise_std > 0.0:
        if rng is None:
            raise ValueError("noise_std > 0 requires an rng")
        linear = linear + rng.normal(0.0, cfg.noise_std, size=3)
    return Twist(linear, angular, Frame.EE)


def cup_pixel_count(image: np.ndarray, scene: Scene) -> int:
    """Number of pixels showing the (flat-shaded) cup color."""
    color = np.asarray(scene.cup_color, dtype=np.float32)
    return int(np.sum(np.all(image == color, axis=-1)))


def sample_initial_pose(rng: np.random.Generator, band: Band, scene: Scene,
                        goal: GoalSpec, volume: Volume,
                        intr: CameraIntrinsics | None = None,
                        cfg: SamplerConfig = SamplerConfig()) -> Pose:
    """Draw a start pose in the given distance band around the hover point.

    Position: uniform radius in the band along a direction inside a cone
    about vertical. Orientation: straight-down tilted about a random
    horizontal axis by a uniform angle up to max_tilt. Rejection keeps only
    poses inside the workspace volume and (when intrinsics are given) poses
    from which the cup is visible.
    """
    lo, hi = cfg.near_band if band is Band.NEAR else cfg.far_band
    target = hover_point(scene, goal)
    q_down = straight_down_quat()
    for _ in range(cfg.max_tries):
        azimuth = rng.uniform(0.0, 2.0 * np.pi)
        cos_polar = rng.uniform(np.cos(cfg.max_polar), 1.0)
        radius = rng.uniform(lo, hi)
        tilt_azimuth = rng.uniform(0.0, 2.0 * np.pi)
        tilt = rng.uniform(0.0, cfg.max_tilt)

        sin_polar = np.sqrt(max(0.0, 1.0 - cos_polar**2))
        direction = np.array([sin_polar * np.cos(azimuth),
                              sin_polar * np.sin(azimuth), cos_polar])
        position = target + radius * direction
        tilt_axis = np.array([np.cos(tilt_azimuth), np.sin(tilt_azimuth), 0.0])
        quat = quat_multiply(quat_exp(tilt_axis * tilt), q_down)
        pose = Pose(position, quat)

        if not bool(contains(volume, position)):
            continue
        if intr is not None:
            img = render(scene, pose, intr)
            if cup_pixel_count(img, scene) < cfg.min_cup_pixels:
                continue
        return pose
    raise RuntimeError(f"no valid {band.value} start pose in {cfg.max_tries} tries; "
                       "check workspace/scene configuration")


def generate_expert_demos(minutes: float, seed: int, scene: Scene, goal: GoalSpec,
                          intr: CameraIntrinsics, ctrl: ControlConfig,
                          expert_cfg: ExpertConfig = ExpertConfig(),
                          sampler_cfg: SamplerConfig = SamplerConfig(),
                          record_rate: float = 3.0,
                          max_episode_duration: float = 60.0) -> DemoDataset:
    """Record scripted demonstrations until the demo-time budget is spent.

    Episodes alternate Near and Far start poses so both distance regimes are
    in every time prefix. The executed motion always includes the safety
    correction (aggregate_twist), while the stored label is the teacher's
    raw command. Recording is cut off once the clock reaches the budget, so
    the demo-time total lands within one control step of minutes*60.
    """
    if minutes <= 0:
        raise ValueError("minutes must be positive")
    target = minutes * 60.0
    rng = np.random.default_rng(seed)
    clock = DemoClock()
    episodes = []
    ep_idx = 0
    while clock.demo_time < target:
        band = Band.NEAR if ep_idx % 2 == 0 else Band.FAR
        pose = sample_initial_pose(rng, band, scene, goal, ctrl.workspace,
                                   intr, sampler_cfg)
        ep, _ = record_episode(
            lambda st: expert_twist(st, scene, goal, expert_cfg, rng),
            SimState(pose, 0.0), scene, intr, clock,
            control_rate=ctrl.rate, record_rate=record_rate,
            max_duration=max_episode_duration,
            stop_fn=lambda st: is_success(st, scene, goal),
            recording_fn=lambda _t: clock.demo_time < target,
            execute_fn=lambda st, tw: aggregate_twist(tw, st, ctrl),
            episode_id=ep_idx, source=f"expert/{band.value}")
        episodes.append(ep)
        ep_idx += 1
    return DemoDataset(tuple(episodes), intr.width, intr.height, record_rate,
                       clock.demo_time)
