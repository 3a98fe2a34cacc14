#!/usr/bin/env python3
"""Walk through the workspace-safety layer with printed numbers.

Shows the signed distance field of the default dome-over-table volume, the
proportional pull-back twist at increasing distances outside it, and what
happens when a deliberately escaping controller runs against the layer for
a minute: it reaches an equilibrium shell instead of leaving.
"""
import numpy as np

from servoclone import (ControlConfig, GoalSpec, Scene, SimState, Twist,
                        contains, default_workspace, distance_field, hover_point,
                        run_episode, safety_twist, straight_down_quat)
from servoclone.geometry import Frame, Pose, twist_world_to_ee
from servoclone.workspace import SafetyConfig
from servoclone.world import CameraIntrinsics

scene = Scene()
goal = GoalSpec()
vol = default_workspace(scene)
safety = SafetyConfig()
hp = hover_point(scene, goal)

print("distance field along a vertical line through the cup")
print(f"{'z [m]':>8}  {'distance':>9}  inside")
for z in (0.005, 0.05, 0.2, 0.5, 0.8, 1.0, 1.2):
    p = np.array([scene.cup_position[0], scene.cup_position[1], z])
    d = distance_field(vol, p)
    print(f"{z:8.3f}  {d:9.4f}  {contains(vol, p)}")

print()
print("pull-back twist above the dome (world frame)")
print(f"{'height':>8}  {'|v| m/s':>9}  direction")
for extra in (0.02, 0.1, 0.2, 0.4, 0.8):
    p = np.array([scene.cup_position[0], scene.cup_position[1], 1.0 + extra])
    t = safety_twist(vol, Pose(p, straight_down_quat()), safety)
    v = np.linalg.norm(t.linear)
    print(f"{extra:8.2f}  {v:9.4f}  {np.round(t.linear / max(v, 1e-12), 3)}")
print(f"(speed = min(gain * distance, max_speed) with gain={safety.gain}, "
      f"max_speed={safety.max_speed})")

print()
print("60 s against a controller that always pushes straight up at 0.3 m/s")
ctrl = ControlConfig(vol)


def escaping_policy(image, state):
    up = Twist(np.array([0.0, 0.0, 0.3]), np.zeros(3), Frame.WORLD)
    return twist_world_to_ee(up, state.ee_pose)


start = Pose(hp + np.array([0.0, 0.0, 0.1]), straight_down_quat())
ep = run_episode(escaping_policy, start, scene, CameraIntrinsics.square(16),
                 ctrl, goal)
dists = [distance_field(vol, s.ee_pose.position) for s in ep.states]
print(f"  worst excursion: {max(dists):+.4f} m "
      f"(equilibrium at push/gain = {0.3 / safety.gain:.3f} m)")
print(f"  final distance:  {dists[-1]:+.4f} m after {len(ep.twists)} steps")
