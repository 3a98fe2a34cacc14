"""Command line entry point: record, train, eval, ablate, teleop-serve.

Every subcommand reads one config file (--config, or the SERVOCLONE_CONFIG
environment variable) plus --set overrides, echoes the resolved settings
into its output directory, and exits 0 only after its outputs were written
and read back. Failures print a single machine-parsable line to stderr:
"error: <kind>: <message>".
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import ablation as abl
from . import data
from .config import ConfigError, RunConfig, echo_config, load_config
from .expert import expert_twist, generate_expert_demos
from .geometry import Pose
from .nn.policy import CheckpointError, load_checkpoint
from .nn.train import DivergenceError, train
from .workspace import TieBreakError


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = 1):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _load(args) -> RunConfig:
    try:
        return load_config(args.config, args.set)
    except ConfigError as e:
        raise CliError("config", str(e)) from e


def cmd_record(args) -> int:
    if args.minutes is None or args.minutes <= 0:
        raise CliError("usage", "--minutes must be a positive number")
    cfg = _load(args)
    out = Path(args.out)
    seed = cfg.record_seed if args.seed is None else args.seed
    if args.source == "expert":
        ds = generate_expert_demos(args.minutes, seed, cfg.scene, cfg.goal,
                                   cfg.camera, cfg.control(), cfg.expert,
                                   cfg.sampler, cfg.record_rate,
                                   cfg.record_max_episode_duration)
        data.save(ds, out)
    else:
        ds = _record_teleop(cfg, out, args)   # the server saves on session end
    echo_config(cfg, out)
    reloaded = data.load(out)
    if len(reloaded) != len(ds):
        raise CliError("io", f"dataset readback mismatch in {out}", code=3)
    print(f"recorded {len(ds)} frames / {len(ds.episodes)} episodes "
          f"({ds.total_demo_time / 60.0:.2f} min demo time) -> {out}")
    return 0


def _record_teleop(cfg: RunConfig, out: Path, args):
    import asyncio

    from .teleop import TeleopServer
    server = TeleopServer(cfg.scene, cfg.camera, cfg.control(), out,
                          record_rate=cfg.record_rate,
                          real_time=cfg.teleop_real_time)

    def announce():
        print(f"teleop server on ws://127.0.0.1:{args.port}, dataset -> {out}",
              flush=True)

    try:
        asyncio.run(server.serve_until_first_session(
            port=args.port, on_listening=announce))
    except OSError as e:
        raise CliError("bind", f"cannot listen on port {args.port}: {e}") from e
    return data.load(out)


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, train=dataclasses.replace(cfg.train, seed=args.seed))
    try:
        ds = data.load(args.data)
    except (data.DatasetError, OSError) as e:
        raise CliError("data", f"{args.data}: {e}") from e
    t0 = time.monotonic()
    try:
        result = train(ds, cfg.train)
    except DivergenceError as e:
        raise CliError("train", str(e), code=3) from e
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    from .nn.policy import save_checkpoint
    save_checkpoint(out, result.policy.net, cfg.train.scales,
                    cfg.train.to_dict(), cfg.train.seed)
    load_checkpoint(out)             # readback validation
    echo_config(cfg, out.parent)
    final = result.epoch_losses[-1] if result.epoch_losses else float("nan")
    print(f"trained {cfg.train.epochs} epochs on {len(ds)} frames in "
          f"{time.monotonic() - t0:.1f}s, final loss {final:.5f} -> {out}")
    return 0


def _poses_from_file(path, cfg: RunConfig):
    from .expert import Band
    try:
        entries = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CliError("data", f"pose file {path}: {e}") from e
    poses = []
    for e in entries:
        band = Band(e.get("band", "near"))
        poses.append((band, Pose(np.asarray(e["position"], dtype=np.float64),
                                 np.asarray(e["quat"], dtype=np.float64))))
    return tuple(poses)


def cmd_eval(args) -> int:
    cfg = _load(args)
    if bool(args.model) == bool(args.oracle):
        raise CliError("usage", "exactly one of --model or --oracle is required")
    ctrl = cfg.control()
    if args.oracle:
        noiseless = dataclasses.replace(cfg.expert, noise_std=0.0)
        def policy_fn(image, state):
            return expert_twist(state, cfg.scene, cfg.goal, noiseless)
        frames = 0
    else:
        try:
            policy, manifest = load_checkpoint(args.model)
        except (CheckpointError, OSError) as e:
            raise CliError("model", f"{args.model}: {e}") from e
        if (policy.net.height, policy.net.width) != (cfg.camera.height, cfg.camera.width):
            raise CliError("model", "checkpoint input dims do not match camera config")
        policy_fn = policy
        frames = 0
    poses = (_poses_from_file(args.poses, cfg) if args.poses
             else abl.eval_poses(cfg.ablation, cfg.scene, cfg.goal, ctrl,
                                 cfg.camera, cfg.sampler))
    trials, successes = abl.run_trials(policy_fn, poses, cfg.ablation, cfg.scene,
                                       cfg.camera, ctrl, cfg.goal)
    cp = abl.CheckpointResult(0.0, frames, (), trials, successes,
                              successes / len(trials))
    report = abl.AblationReport((cp,), abl.pose_set_hash(poses), len(trials),
                                cfg.train.to_dict())
    out = Path(args.out)
    abl.emit_report(report, out)
    echo_config(cfg, out)
    _validate_report_files(out, 1)
    print(f"eval: {successes}/{len(trials)} successes -> {out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    try:
        ds = data.load(args.data)
    except (data.DatasetError, OSError) as e:
        raise CliError("data", f"{args.data}: {e}") from e
    def progress(cp):
        print(f"checkpoint {cp.minutes:g} min: {cp.successes}/{len(cp.trials)} "
              f"successes ({cp.frames} frames)")
    try:
        report = abl.run_ablation(ds, cfg.ablation, cfg.train, cfg.scene, cfg.goal,
                                  cfg.camera, cfg.control(), cfg.sampler,
                                  progress_fn=progress)
    except abl.AblationConfigError as e:
        raise CliError("config", str(e)) from e
    except DivergenceError as e:
        raise CliError("train", str(e), code=3) from e
    out = Path(args.out)
    abl.emit_report(report, out)
    echo_config(cfg, out)
    _validate_report_files(out, len(cfg.ablation.checkpoints))
    print(f"ablation complete: "
          + ", ".join(f"{cp.minutes:g}min={cp.success_rate:.0%}"
                      for cp in report.checkpoints)
          + f" -> {out}")
    return 0


def _validate_report_files(out: Path, expected_rows: int) -> None:
    csv_lines = (out / "results.csv").read_text().strip().split("\n")
    if len(csv_lines) != expected_rows + 1 or csv_lines[0] != abl.CSV_HEADER:
        raise CliError("io", f"results.csv in {out} failed validation", code=3)
    json.loads((out / "results.json").read_text())


def cmd_teleop_serve(args) -> int:
    import asyncio

    from .teleop import TeleopServer
    cfg = _load(args)
    out = Path(args.out)
    server = TeleopServer(cfg.scene, cfg.camera, cfg.control(), out,
                          record_rate=cfg.record_rate,
                          real_time=cfg.teleop_real_time)
    def announce():
        print(f"teleop server on ws://127.0.0.1:{args.port}, dataset -> {out}",
              flush=True)

    try:
        saved = asyncio.run(server.serve_until_first_session(
            port=args.port, on_listening=announce))
    except OSError as e:
        raise CliError("bind", f"cannot listen on port {args.port}: {e}") from e
    echo_config(cfg, out)
    ds = data.load(saved)
    print(f"session ended: {len(ds)} frames / {len(ds.episodes)} episodes -> {saved}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="servoclone",
        description="Record demonstrations, train the visual-servoing policy, "
                    "and reproduce the success-rate-vs-demo-time study.")
    p.add_argument("--config", help="JSON or TOML config file "
                   "(default: $SERVOCLONE_CONFIG if set)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("record", help="record a demonstration dataset")
    s.add_argument("--minutes", type=float, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--source", choices=("expert", "teleop"), default="expert")
    s.add_argument("--seed", type=int)
    s.add_argument("--port", type=int, default=8765, help="teleop source only")
    s.set_defaults(fn=cmd_record)

    s = sub.add_parser("train", help="train a policy checkpoint from a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("eval", help="run the fixed trial protocol on one policy")
    s.add_argument("--model")
    s.add_argument("--oracle", action="store_true",
                   help="evaluate the scripted teacher instead of a checkpoint")
    s.add_argument("--poses", help="JSON file with explicit start poses")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("ablate", help="full checkpoint sweep and report")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_ablate)

    s = sub.add_parser("teleop-serve", help="serve the teleoperation protocol")
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_teleop_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e.kind}: {e}", file=sys.stderr)
        return e.code
    except (TieBreakError, data.DatasetError) as e:
        print(f"error: runtime: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
