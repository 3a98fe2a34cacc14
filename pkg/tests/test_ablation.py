import json

import numpy as np
import pytest

from servoclone import ablation as abl
from servoclone.control import ControlConfig, default_workspace
from servoclone.data import DemoDataset, DemoFrame, Episode, quantize_image
from servoclone.expert import Band
from servoclone.geometry import Frame, Twist
from servoclone.nn.policy import PolicyNet, TwistPolicy
from servoclone.world import CameraIntrinsics, GoalSpec, Scene

SIZE = 16


def setup():
    scene = Scene()
    goal = GoalSpec()
    ctrl = ControlConfig(default_workspace(scene), time_limit=10.0)
    intr = CameraIntrinsics.square(SIZE)
    return scene, goal, ctrl, intr


def tiny_cfg(**kw):
    base = dict(checkpoints=(0.05, 0.1), n_near=1, n_far=1, trials_per_pose=2)
    base.update(kw)
    return abl.AblationConfig(**base)


def synthetic_dataset(total_seconds=7.0, dt=1.0 / 3.0, size=SIZE):
    """Flat gray frames with zero twists, one global demo clock."""
    rng = np.random.default_rng(0)
    episodes = []
    t = 0.0
    ep_i = 0
    while t < total_seconds:
        frames = []
        for _ in range(5):
            img = quantize_image(rng.uniform(0.0, 1.0, (size, size, 3)).astype(np.float32))
            frames.append(DemoFrame(img, Twist.zero(Frame.EE), t))
            t += dt
            if t >= total_seconds + dt:
                break
        episodes.append(Episode(f"ep{ep_i}", tuple(frames), "expert"))
        ep_i += 1
    return DemoDataset(tuple(episodes), size, size, 1.0 / dt, t)


def oracle_factory(scene, goal):
    return abl.oracle_policy_factory(scene, goal)


# --- config ---------------------------------------------------------------

def test_config_validation():
    with pytest.raises(abl.AblationConfigError):
        abl.AblationConfig(checkpoints=(4.0, 4.0))
    with pytest.raises(abl.AblationConfigError):
        abl.AblationConfig(checkpoints=(8.0, 4.0))
    with pytest.raises(abl.AblationConfigError):
        abl.AblationConfig(checkpoints=(-1.0, 4.0))
    with pytest.raises(abl.AblationConfigError):
        abl.AblationConfig(n_near=0, n_far=0)
    with pytest.raises(abl.AblationConfigError):
        abl.AblationConfig(trials_per_pose=0)
    assert abl.AblationConfig().trials_per_checkpoint == 18


# --- pose protocol --------------------------------------------------------

def test_eval_poses_layout_and_determinism():
    scene, goal, ctrl, intr = setup()
    cfg = abl.AblationConfig()
    poses = abl.eval_poses(cfg, scene, goal, ctrl, intr)
    assert len(poses) == 9
    assert [b for b, _ in poses[:5]] == [Band.NEAR] * 5
    assert [b for b, _ in poses[5:]] == [Band.FAR] * 4
    again = abl.eval_poses(cfg, scene, goal, ctrl, intr)
    for (b1, p1), (b2, p2) in zip(poses, again):
        assert b1 is b2
        assert np.array_equal(p1.position, p2.position)
        assert np.array_equal(p1.quat, p2.quat)


def test_pose_set_hash_sensitivity():
    scene, goal, ctrl, intr = setup()
    cfg = abl.AblationConfig()
    poses = abl.eval_poses(cfg, scene, goal, ctrl, intr)
    h = abl.pose_set_hash(poses)
    assert h == abl.pose_set_hash(poses)
    assert len(h) == 64
    other = abl.eval_poses(abl.AblationConfig(pose_seed=8), scene, goal, ctrl, intr)
    assert abl.pose_set_hash(other) != h
    # band relabeling alone changes the hash
    relabeled = tuple((Band.FAR if b is Band.NEAR else Band.NEAR, p)
                      for b, p in poses)
    assert abl.pose_set_hash(relabeled) != h


def test_trial_pose_jitter():
    scene, goal, ctrl, intr = setup()
    cfg = abl.AblationConfig()
    base = abl.eval_poses(cfg, scene, goal, ctrl, intr)[0][1]
    assert abl._trial_pose(base, 0, 0, cfg) is base
    j1 = abl._trial_pose(base, 0, 1, cfg)
    j2 = abl._trial_pose(base, 0, 1, cfg)
    assert np.array_equal(j1.position, j2.position)
    assert np.array_equal(j1.quat, j2.quat)
    shift = np.linalg.norm(j1.position - base.position)
    assert 0.0 < shift < 0.05          # a few mm of reset slop, not a new pose
    assert abs(np.linalg.norm(j1.quat) - 1.0) < 1e-9
    other_pose = abl._trial_pose(base, 1, 1, cfg)
    assert not np.array_equal(j1.position, other_pose.position)


# --- trial runner ---------------------------------------------------------

def test_run_trials_oracle_full_marks():
    scene, goal, ctrl, intr = setup()
    cfg = tiny_cfg()
    poses = abl.eval_poses(cfg, scene, goal, ctrl, intr)
    policy, _ = oracle_factory(scene, goal)(None, 0.0)
    trials, successes = abl.run_trials(policy, poses, cfg, scene, intr, ctrl, goal)
    assert successes == len(trials) == cfg.trials_per_checkpoint
    assert all(t.success and t.reason == "goal" for t in trials)
    assert sorted({(t.pose_index, t.trial) for t in trials}) == [
        (0, 0), (0, 1), (1, 0), (1, 1)]
    assert {t.band for t in trials} == {"near", "far"}


def test_run_trials_batched_for_net_policy():
    scene, goal, ctrl, intr = setup()
    short = ControlConfig(ctrl.workspace, ctrl.safety, 30.0, time_limit=0.5)
    cfg = tiny_cfg()
    poses = abl.eval_poses(cfg, scene, goal, short, intr)
    policy = TwistPolicy(PolicyNet(SIZE, SIZE, np.random.default_rng(0)))
    trials, successes = abl.run_trials(policy, poses, cfg, scene, intr, short, goal)
    assert len(trials) == cfg.trials_per_checkpoint
    assert 0 <= successes <= len(trials)
    assert all(t.reason in ("goal", "timeout", "emergency_stop") for t in trials)


# --- full sweep -----------------------------------------------------------

def test_run_ablation_report_shape():
    scene, goal, ctrl, intr = setup()
    cfg = tiny_cfg()
    ds = synthetic_dataset()
    from servoclone.nn.train import TrainConfig
    report = abl.run_ablation(ds, cfg, TrainConfig(epochs=1), scene, goal, intr,
                              ctrl, policy_factory=oracle_factory(scene, goal))
    assert [cp.minutes for cp in report.checkpoints] == [0.05, 0.1]
    frames = [cp.frames for cp in report.checkpoints]
    assert frames[0] < frames[1] <= len(ds)
    assert all(cp.success_rate == 1.0 for cp in report.checkpoints)
    assert report.total_trials == 2 * cfg.trials_per_checkpoint
    assert report.pose_hash == abl.pose_set_hash(
        abl.eval_poses(cfg, scene, goal, ctrl, intr))


def test_run_ablation_rejects_short_dataset():
    scene, goal, ctrl, intr = setup()
    cfg = tiny_cfg(checkpoints=(1.0, 5.0))    # needs 5 min, ds has ~7 s
    ds = synthetic_dataset()
    from servoclone.nn.train import TrainConfig
    with pytest.raises(abl.AblationConfigError, match="demo time"):
        abl.run_ablation(ds, cfg, TrainConfig(epochs=1), scene, goal, intr, ctrl)


def test_progress_callback_sees_each_checkpoint():
    scene, goal, ctrl, intr = setup()
    cfg = tiny_cfg()
    ds = synthetic_dataset()
    from servoclone.nn.train import TrainConfig
    seen = []
    abl.run_ablation(ds, cfg, TrainConfig(epochs=1), scene, goal, intr, ctrl,
                     policy_factory=oracle_factory(scene, goal),
                     progress_fn=lambda cp: seen.append(cp.minutes))
    assert seen == [0.05, 0.1]


# --- report emission ------------------------------------------------------

def sample_report():
    t = lambda i, band, trial, ok: abl.TrialResult(i, band, trial, ok,
                                                   1.5 if ok else None,
                                                   "goal" if ok else "timeout")
    cp1 = abl.CheckpointResult(4.0, 720, (0.5, 0.1), (t(0, "near", 0, True),
                                                      t(0, "near", 1, False)), 1, 0.5)
    cp2 = abl.CheckpointResult(8.0, 1440, (0.4,), (t(0, "near", 0, True),
                                                   t(0, "near", 1, True)), 2, 1.0)
    return abl.AblationReport((cp1, cp2), "ab" * 32, 4, {"epochs": 1})


def test_csv_golden_format():
    report = sample_report()
    text = abl.report_csv(report)
    lines = text.strip().split("\n")
    assert lines[0] == "checkpoint_minutes,frames,successes,trials,success_rate"
    assert lines[1] == "4,720,1,2,0.500000"
    assert lines[2] == "8,1440,2,2,1.000000"


def test_json_report_round_trips():
    report = sample_report()
    payload = json.loads(abl.report_json(report))
    assert payload["pose_hash"] == "ab" * 32
    assert payload["total_trials"] == 4
    assert len(payload["checkpoints"]) == 2
    cp = payload["checkpoints"][0]
    assert cp["minutes"] == 4.0
    assert cp["trials"][1]["reason"] == "timeout"
    assert cp["trials"][1]["time_to_goal"] is None


def test_svg_has_one_bar_per_checkpoint():
    text = abl.report_svg(sample_report())
    assert text.count("<rect") == 2
    assert "</svg>" in text


def test_emit_report_writes_all_files(tmp_path):
    paths = abl.emit_report(sample_report(), tmp_path / "out")
    for p in paths.values():
        assert p.exists() and p.stat().st_size > 0
    header = (tmp_path / "out" / "results.csv").read_text().split("\n")[0]
    assert header == abl.CSV_HEADER
