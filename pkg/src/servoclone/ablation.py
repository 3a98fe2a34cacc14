"""Success rate versus demonstration-time budget.

Splits one demonstration pool at increasing time marks, trains a fresh
policy per split, and evaluates each on a fixed 9-pose (5 near, 4 far)
protocol with two trials per pose. The pose set is drawn once per run from
a seed and is identical across checkpoints (asserted by hash). The second
trial starts from a slightly jittered copy of the pose, standing in for the
imperfect manual resets of a physical rig; the jitter is seeded per pose so
the full run is deterministic.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .control import (ControlConfig, policy_from_expert, run_episode,
                      run_episodes_batched)
from .data import DemoDataset, split_by_time
from .expert import Band, ExpertConfig, SamplerConfig, expert_twist, sample_initial_pose
from .geometry import Pose, quat_exp, quat_multiply
from .nn.train import TrainConfig, train
from .world import CameraIntrinsics, GoalSpec, Scene


class AblationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AblationConfig:
    checkpoints: tuple = (4.0, 8.0, 12.0, 16.0, 20.0)   # minutes
    n_near: int = 5
    n_far: int = 4
    trials_per_pose: int = 2
    pose_seed: int = 7
    jitter_pos_std: float = 0.005       # m, trial-reset imprecision
    jitter_tilt_std: float = np.deg2rad(1.0)

    def __post_init__(self):
        cps = tuple(float(c) for c in self.checkpoints)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise AblationConfigError("checkpoints must be strictly increasing")
        if any(c <= 0 for c in cps):
            raise AblationConfigError("checkpoint minutes must be positive")
        if self.n_near < 0 or self.n_far < 0 or self.n_near + self.n_far == 0:
            raise AblationConfigError("need at least one eval pose")
        if self.trials_per_pose < 1:
            raise AblationConfigError("trials_per_pose must be >= 1")

    @property
    def trials_per_checkpoint(self) -> int:
        return (self.n_near + self.n_far) * self.trials_per_pose


def eval_poses(cfg: AblationConfig, scene: Scene, goal: GoalSpec, ctrl: ControlConfig,
               intr: CameraIntrinsics,
               sampler: SamplerConfig = SamplerConfig()) -> tuple:
    """The fixed evaluation set: (band, Pose) pairs, near block then far."""
    rng = np.random.default_rng(cfg.pose_seed)
    poses = []
    for _ in range(cfg.n_near):
        poses.append((Band.NEAR, sample_initial_pose(rng, Band.NEAR, scene, goal,
                                                     ctrl.workspace, intr, sampler)))
    for _ in range(cfg.n_far):
        poses.append((Band.FAR, sample_initial_pose(rng, Band.FAR, scene, goal,
                                                    ctrl.workspace, intr, sampler)))
    return tuple(poses)


def pose_set_hash(poses) -> str:
    h = hashlib.sha256()
    for band, pose in poses:
        h.update(band.value.encode())
        h.update(np.ascontiguousarray(pose.position, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(pose.quat, dtype=np.float64).tobytes())
    return h.hexdigest()


def _trial_pose(base: Pose, pose_index: int, trial: int, cfg: AblationConfig) -> Pose:
    """Trial 0 is the pose itself; later trials jitter it deterministically."""
    if trial == 0:
        return base
    rng = np.random.default_rng((cfg.pose_seed, pose_index, trial))
    dp = rng.normal(0.0, cfg.jitter_pos_std, size=3)
    azimuth = rng.uniform(0.0, 2.0 * np.pi)
    axis = np.array([np.cos(azimuth), np.sin(azimuth), 0.0])
    dq = quat_exp(axis * abs(rng.normal(0.0, cfg.jitter_tilt_std)))
    return Pose(base.position + dp, quat_multiply(dq, base.quat))


@dataclass(frozen=True)
class TrialResult:
    pose_index: int
    band: str
    trial: int
    success: bool
    time_to_goal: float | None
    reason: str


@dataclass(frozen=True)
class CheckpointResult:
    minutes: float
    frames: int
    epoch_losses: tuple
    trials: tuple
    successes: int
    success_rate: float


@dataclass(frozen=True)
class AblationReport:
    checkpoints: tuple            # CheckpointResult, ascending minutes
    pose_hash: str
    total_trials: int
    train_config: dict


def _default_policy_factory(train_cfg: TrainConfig):
    def factory(split: DemoDataset, minutes: float):
        cp_seed = int(train_cfg.seed + round(minutes))
        result = train(split, dataclasses.replace(train_cfg, seed=cp_seed))
        return result.policy, result.epoch_losses
    return factory


def oracle_policy_factory(scene: Scene, goal: GoalSpec,
                          expert_cfg: ExpertConfig | None = None):
    """Evaluate the noiseless scripted teacher instead of a trained net."""
    cfg = expert_cfg or dataclasses.replace(ExpertConfig(), noise_std=0.0)
    def factory(split, minutes):
        return policy_from_expert(lambda st: expert_twist(st, scene, goal, cfg)), ()
    return factory


def run_trials(policy, poses, cfg: AblationConfig, scene: Scene,
               intr: CameraIntrinsics, ctrl: ControlConfig,
               goal: GoalSpec) -> tuple[tuple, int]:
    """Evaluate one policy over the pose set; returns (trial results, successes).

    An image policy (anything with .net and .scales) runs all episodes in
    lockstep with batched forwards; a plain (image, state) callable runs
    them one by one.
    """
    meta = []
    starts = []
    for pose_index, (band, base) in enumerate(poses):
        for trial in range(cfg.trials_per_pose):
            meta.append((pose_index, band, trial))
            starts.append(_trial_pose(base, pose_index, trial, cfg))
    if hasattr(policy, "net") and hasattr(policy, "scales"):
        episodes = run_episodes_batched(policy, starts, scene, intr, ctrl, goal)
    else:
        episodes = [run_episode(policy, s, scene, intr, ctrl, goal) for s in starts]
    trials = []
    successes = 0
    for (pose_index, band, trial), ep in zip(meta, episodes):
        trials.append(TrialResult(pose_index, band.value, trial,
                                  ep.success, ep.time_to_goal, ep.reason))
        successes += int(ep.success)
    return tuple(trials), successes


def run_ablation(ds: DemoDataset, cfg: AblationConfig, train_cfg: TrainConfig,
                 scene: Scene, goal: GoalSpec, intr: CameraIntrinsics,
                 ctrl: ControlConfig, sampler: SamplerConfig = SamplerConfig(),
                 policy_factory=None, progress_fn=None) -> AblationReport:
    """Full checkpoint sweep: split, train, evaluate, tally.

    policy_factory(split, minutes) -> (policy_fn, epoch_losses) substitutes
    the training stage (oracle upper bound, random-net floor, tests).
    """
    need = max(cfg.checkpoints) * 60.0
    if ds.total_demo_time + 1e-6 < need:
        raise AblationConfigError(
            f"dataset covers {ds.total_demo_time / 60.0:.2f} min of demo time, "
            f"need {need / 60.0:.0f}")
    poses = eval_poses(cfg, scene, goal, ctrl, intr, sampler)
    phash = pose_set_hash(poses)
    factory = policy_factory or _default_policy_factory(train_cfg)
    results = []
    for minutes in cfg.checkpoints:
        split = split_by_time(ds, minutes)
        assert pose_set_hash(poses) == phash, "eval pose set drifted"
        policy_fn, losses = factory(split, minutes)
        trials, successes = run_trials(policy_fn, poses, cfg, scene, intr, ctrl, goal)
        n = cfg.trials_per_checkpoint
        results.append(CheckpointResult(minutes, len(split), tuple(losses),
                                        tuple(trials), successes, successes / n))
        if progress_fn is not None:
            progress_fn(results[-1])
    return AblationReport(tuple(results), phash,
                          cfg.trials_per_checkpoint * len(cfg.checkpoints),
                          train_cfg.to_dict())


CSV_HEADER = "checkpoint_minutes,frames,successes,trials,success_rate"


def report_csv(report: AblationReport) -> str:
    lines = [CSV_HEADER]
    for cp in report.checkpoints:
        n = len(cp.trials)
        lines.append(f"{cp.minutes:g},{cp.frames},{cp.successes},{n},"
                     f"{cp.success_rate:.6f}")
    return "\n".join(lines) + "\n"


def report_json(report: AblationReport) -> str:
    payload = {
        "pose_hash": report.pose_hash,
        "total_trials": report.total_trials,
        "train_config": report.train_config,
        "checkpoints": [
            {
                "minutes": cp.minutes,
                "frames": cp.frames,
                "epoch_losses": list(cp.epoch_losses),
                "successes": cp.successes,
                "trials": [dataclasses.asdict(t) for t in cp.trials],
                "success_rate": cp.success_rate,
            }
            for cp in report.checkpoints
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_svg(report: AblationReport) -> str:
    """Bar chart of success rate per checkpoint, no dependencies."""
    bar_w, gap, h, pad = 60, 20, 220, 40
    n = len(report.checkpoints)
    width = pad * 2 + n * bar_w + max(0, n - 1) * gap
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{h + 2 * pad}" font-family="sans-serif" font-size="12">',
             f'<text x="{width / 2:g}" y="20" text-anchor="middle">'
             'Success rate vs demonstration minutes</text>']
    for i, cp in enumerate(report.checkpoints):
        x = pad + i * (bar_w + gap)
        bh = cp.success_rate * h
        y = pad + (h - bh)
        parts.append(f'<rect x="{x:g}" y="{y:g}" width="{bar_w}" height="{bh:g}" '
                     'fill="#4878a8"/>')
        parts.append(f'<text x="{x + bar_w / 2:g}" y="{pad + h + 16}" '
                     f'text-anchor="middle">{cp.minutes:g}</text>')
        parts.append(f'<text x="{x + bar_w / 2:g}" y="{y - 4:g}" '
                     f'text-anchor="middle">{cp.successes}/{len(cp.trials)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: AblationReport, out_dir) -> dict:
    """Write results.csv, results.json and results.svg; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "results.csv", "json": out / "results.json",
             "svg": out / "results.svg"}
    paths["csv"].write_text(report_csv(report))
    paths["json"].write_text(report_json(report))
    paths["svg"].write_text(report_svg(report))
    return paths
