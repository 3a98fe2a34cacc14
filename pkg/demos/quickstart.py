#!/usr/bin/env python3
"""Smallest end-to-end pass: record, train, run one closed-loop episode.

Uses a 32x32 camera and a fraction of a minute of demonstrations so the
whole thing finishes in about a minute on one core. Expect a mediocre
policy; the point is to watch data flow through every stage.
"""
import argparse
from pathlib import Path

import numpy as np

from servoclone import (Band, ControlConfig, ExpertConfig, GoalSpec, Scene,
                        SamplerConfig, TrainConfig, default_workspace,
                        generate_expert_demos, policy_from_net, run_episode,
                        sample_initial_pose, save, train, write_ppm)
from servoclone.world import CameraIntrinsics, render

p = argparse.ArgumentParser()
p.add_argument("--minutes", type=float, default=0.3, help="demo budget")
p.add_argument("--epochs", type=int, default=3)
p.add_argument("--out", default="quickstart_out")
args = p.parse_args()

scene = Scene()
goal = GoalSpec()
intr = CameraIntrinsics.square(32)
ctrl = ControlConfig(default_workspace(scene))
out = Path(args.out)

print(f"1. recording {args.minutes:g} min of scripted demonstrations")
ds = generate_expert_demos(args.minutes, 0, scene, goal, intr, ctrl,
                           ExpertConfig(), SamplerConfig())
save(ds, out / "demos")
print(f"   {len(ds)} frames across {len(ds.episodes)} episodes "
      f"-> {out / 'demos'}")

print(f"2. training {args.epochs} epochs")
cfg = TrainConfig(epochs=args.epochs, seed=0)
result = train(ds, cfg)
print("   epoch losses: " + ", ".join(f"{l:.4f}" for l in result.epoch_losses))

print("3. one closed-loop episode from a far start")
pose = sample_initial_pose(np.random.default_rng(42), Band.FAR, scene, goal,
                           ctrl.workspace)
ep = run_episode(policy_from_net(result.policy), pose, scene, intr, ctrl, goal)
print(f"   outcome: {ep.reason}"
      + (f" after {ep.time_to_goal:.1f} s" if ep.success else
         f" ({len(ep.twists)} steps)"))

strip = np.concatenate(
    [render(scene, ep.states[i].ee_pose, intr)
     for i in np.linspace(0, len(ep.states) - 1, 8).astype(int)], axis=1)
write_ppm(strip, out / "episode_strip.ppm")
print(f"   camera strip -> {out / 'episode_strip.ppm'}")
