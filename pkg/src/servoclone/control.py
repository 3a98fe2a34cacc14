"""The 30 Hz closed loop: render, policy forward, safety correction, apply.

The applied twist is always exactly policy + safety (component-wise, in the
end-effector frame). Episodes run on the simulated clock only, so results
are independent of wall-clock speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import quantize_image
from .geometry import Frame, Pose, Twist, twist_world_to_ee
from .workspace import (HalfSpace, Intersection, SafetyConfig, Sphere, Volume,
                        safety_twist)
from .world import (CameraIntrinsics, GoalSpec, Scene, SimState, is_success,
                    render, step)


class EmergencyStopError(RuntimeError):
    """Non-finite twist reached the actuator boundary; the loop must abort."""


@dataclass(frozen=True)
class ControlConfig:
    workspace: Volume
    safety: SafetyConfig = SafetyConfig()
    rate: float = 30.0           # Hz
    time_limit: float = 60.0     # seconds

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("control rate must be positive")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")


def default_workspace(scene: Scene) -> Volume:
    """Allowed region for the desk task: a dome over the table.

    Intersection of the half-space just above the table surface (keeps the
    camera from hitting the table) and a sphere generously covering the cup
    and every sampled start pose.
    """
    center = np.array([scene.cup_position[0], scene.cup_position[1],
                       scene.table_plane_z + 0.35])
    return Intersection((
        HalfSpace(np.array([0.0, 0.0, 1.0]), scene.table_plane_z + 0.01),
        Sphere(center, 0.65),
    ))


def aggregate_twist(command: Twist, state: SimState, ctrl: ControlConfig) -> Twist:
    """command + safety, in the end-effector frame.

    The safety twist is computed in world coordinates (the workspace is a
    world-frame volume) and rotated into the command frame before the sum.
    """
    if command.frame is not Frame.EE:
        raise ValueError("commands must be expressed in the end-effector frame")
    t_safety = twist_world_to_ee(
        safety_twist(ctrl.workspace, state.ee_pose, ctrl.safety),
        state.ee_pose)
    return Twist(command.linear + t_safety.linear,
                 command.angular + t_safety.angular, Frame.EE)


def control_step(policy_fn, state: SimState, scene: Scene, intr: CameraIntrinsics,
                 ctrl: ControlConfig) -> tuple[SimState, Twist]:
    """One cycle: render, policy_fn(image, state) -> Twist[EE], add safety, step.

    Raises EmergencyStopError if the policy output is not finite, whether it
    surfaces as a FloatingPointError from the policy or as corrupted twist
    arrays; the state is left untouched in that case.
    """
    image = quantize_image(render(scene, state.ee_pose, intr))
    try:
        t_policy = policy_fn(image, state)
    except FloatingPointError as e:
        raise EmergencyStopError(
            f"non-finite policy output at sim_time={state.sim_time:.3f}s") from e
    if not (np.all(np.isfinite(t_policy.linear)) and np.all(np.isfinite(t_policy.angular))):
        raise EmergencyStopError(
            f"non-finite twist at sim_time={state.sim_time:.3f}s")
    t_final = aggregate_twist(t_policy, state, ctrl)
    return step(state, t_final, 1.0 / ctrl.rate), t_final


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    time_to_goal: float | None          # seconds, None on failure
    reason: str                         # "goal", "timeout", "emergency_stop"
    states: tuple = field(repr=False)   # SimState per step, initial included
    twists: tuple = field(repr=False)   # applied Twist per step


def run_episode(policy_fn, initial: Pose, scene: Scene, intr: CameraIntrinsics,
                ctrl: ControlConfig, goal: GoalSpec) -> EpisodeResult:
    """Run the closed loop until success or the time limit.

    policy_fn(image, state) -> Twist[EE]; the trained network ignores state,
    the scripted oracle ignores the image.
    """
    state = SimState(initial, 0.0)
    states = [state]
    twists = []
    if is_success(state, scene, goal):
        return EpisodeResult(True, 0.0, "goal", tuple(states), ())
    n_steps = int(round(ctrl.time_limit * ctrl.rate))
    for _ in range(n_steps):
        try:
            state, applied = control_step(policy_fn, state, scene, intr, ctrl)
        except EmergencyStopError:
            return EpisodeResult(False, None, "emergency_stop",
                                 tuple(states), tuple(twists))
        states.append(state)
        twists.append(applied)
        if is_success(state, scene, goal):
            return EpisodeResult(True, state.sim_time, "goal",
                                 tuple(states), tuple(twists))
    return EpisodeResult(False, None, "timeout", tuple(states), tuple(twists))


def run_episodes_batched(policy, initials, scene: Scene, intr: CameraIntrinsics,
                         ctrl: ControlConfig, goal: GoalSpec) -> list[EpisodeResult]:
    """Run independent episodes in lockstep, batching the network forward.

    policy is a TwistPolicy-like object (net + scales). Results match
    per-episode runs up to GEMM summation order; the batching exists because
    one wide forward pass is several times cheaper than N single-image ones.
    """
    n = len(initials)
    states = [SimState(p, 0.0) for p in initials]
    traj_states = [[s] for s in states]
    traj_twists = [[] for _ in range(n)]
    outcome: list = [None] * n
    for i, s in enumerate(states):
        if is_success(s, scene, goal):
            outcome[i] = (True, 0.0, "goal")
    active = [i for i in range(n) if outcome[i] is None]
    dt = 1.0 / ctrl.rate
    n_steps = int(round(ctrl.time_limit * ctrl.rate))
    scales = np.asarray(policy.scales, dtype=np.float64)
    for _ in range(n_steps):
        if not active:
            break
        batch = np.stack([quantize_image(render(scene, states[i].ee_pose, intr))
                          for i in active])
        y = policy.net.forward(batch).astype(np.float64) * scales
        still = []
        for row, i in enumerate(active):
            if not np.all(np.isfinite(y[row])):
                outcome[i] = (False, None, "emergency_stop")
                continue
            t_net = Twist.from_array(y[row], Frame.EE)
            t_final = aggregate_twist(t_net, states[i], ctrl)
            states[i] = step(states[i], t_final, dt)
            traj_states[i].append(states[i])
            traj_twists[i].append(t_final)
            if is_success(states[i], scene, goal):
                outcome[i] = (True, states[i].sim_time, "goal")
            else:
                still.append(i)
        active = still
    results = []
    for i in range(n):
        success, t_goal, reason = outcome[i] or (False, None, "timeout")
        results.append(EpisodeResult(success, t_goal, reason,
                                     tuple(traj_states[i]), tuple(traj_twists[i])))
    return results


def policy_from_net(twist_policy) -> "callable":
    """Adapt an image-only policy (e.g. TwistPolicy) to the loop signature."""
    def fn(image, state):
        return twist_policy(image)
    return fn


def policy_from_expert(expert_fn) -> "callable":
    """Adapt a state-only policy (the scripted teacher) to the loop signature."""
    def fn(image, state):
        return expert_fn(state)
    return fn
