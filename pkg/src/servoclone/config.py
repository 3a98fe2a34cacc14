"""Run configuration: one JSON or TOML file, validated as a whole.

Every tool reads the same structure; unknown sections or keys are rejected
so typos fail loudly instead of silently using defaults. Angles and lengths
are SI (radians, meters). The fully resolved configuration can be dumped
back to a dict for provenance echoes next to outputs.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:          # Python < 3.11
    try:
        import tomli as _toml
    except ModuleNotFoundError:
        _toml = None

from .ablation import AblationConfig
from .control import ControlConfig, default_workspace
from .expert import ExpertConfig, SamplerConfig
from .nn.train import TrainConfig
from .workspace import SafetyConfig, Volume, volume_from_dict
from .world import CameraIntrinsics, GoalSpec, Scene

ENV_CONFIG = "SERVOCLONE_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scene: Scene
    goal: GoalSpec
    camera: CameraIntrinsics
    workspace: Volume
    safety: SafetyConfig
    expert: ExpertConfig
    sampler: SamplerConfig
    train: TrainConfig
    ablation: AblationConfig
    control_rate: float = 30.0
    time_limit: float = 60.0
    record_rate: float = 3.0
    record_seed: int = 0
    record_max_episode_duration: float = 60.0
    # Pace the teleop loop to the wall clock so a human pilot experiences the
    # control rate; scripted clients turn this off to run as fast as the sim.
    teleop_real_time: bool = True

    def control(self) -> ControlConfig:
        return ControlConfig(self.workspace, self.safety,
                             self.control_rate, self.time_limit)


def _build(cls, section: dict, name: str):
    """Construct a config dataclass from a dict, rejecting unknown keys."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kwargs = {k: tuple(v) if isinstance(v, list) and k != "cup_position" else v
              for k, v in section.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid [{name}] section: {e}") from e


_SECTIONS = ("scene", "goal", "camera", "workspace", "safety", "expert",
             "sampler", "train", "ablation", "control", "record", "teleop")


def config_from_dict(d: dict) -> RunConfig:
    unknown = set(d) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    scene = _build(Scene, d.get("scene", {}), "scene")
    goal = _build(GoalSpec, d.get("goal", {}), "goal")
    camera = _build(CameraIntrinsics, d.get("camera", {}), "camera")
    if "workspace" in d:
        try:
            workspace = volume_from_dict(d["workspace"])
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"invalid [workspace] section: {e}") from e
    else:
        workspace = default_workspace(scene)

    control = d.get("control", {})
    unknown = set(control) - {"rate", "time_limit"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [control]: {', '.join(sorted(unknown))}")
    record = d.get("record", {})
    unknown = set(record) - {"rate", "seed", "max_episode_duration"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [record]: {', '.join(sorted(unknown))}")
    teleop = d.get("teleop", {})
    unknown = set(teleop) - {"real_time"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [teleop]: {', '.join(sorted(unknown))}")

    try:
        return RunConfig(
            scene=scene, goal=goal, camera=camera, workspace=workspace,
            safety=_build(SafetyConfig, d.get("safety", {}), "safety"),
            expert=_build(ExpertConfig, d.get("expert", {}), "expert"),
            sampler=_build(SamplerConfig, d.get("sampler", {}), "sampler"),
            train=_build(TrainConfig, d.get("train", {}), "train"),
            ablation=_build(AblationConfig, d.get("ablation", {}), "ablation"),
            control_rate=float(control.get("rate", 30.0)),
            time_limit=float(control.get("time_limit", 60.0)),
            record_rate=float(record.get("rate", 3.0)),
            record_seed=int(record.get("seed", 0)),
            record_max_episode_duration=float(record.get("max_episode_duration", 60.0)),
            teleop_real_time=bool(teleop.get("real_time", True)),
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e


def config_to_dict(cfg: RunConfig) -> dict:
    """Fully resolved settings as a JSON-serializable dict."""
    def plain(dc):
        out = {}
        for f in dataclasses.fields(dc):
            v = getattr(dc, f.name)
            if isinstance(v, np.ndarray):
                v = [float(x) for x in v]
            elif isinstance(v, tuple):
                v = [float(x) for x in v]
            elif isinstance(v, (np.floating, np.integer)):
                v = v.item()
            out[f.name] = v
        return out

    return {
        "scene": plain(cfg.scene),
        "goal": plain(cfg.goal),
        "camera": plain(cfg.camera),
        "workspace": cfg.workspace.to_dict(),
        "safety": plain(cfg.safety),
        "expert": plain(cfg.expert),
        "sampler": plain(cfg.sampler),
        "train": cfg.train.to_dict(),
        "ablation": plain(cfg.ablation),
        "control": {"rate": cfg.control_rate, "time_limit": cfg.time_limit},
        "record": {"rate": cfg.record_rate, "seed": cfg.record_seed,
                   "max_episode_duration": cfg.record_max_episode_duration},
        "teleop": {"real_time": cfg.teleop_real_time},
    }


def _parse_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        if _toml is None:
            raise ConfigError("TOML config requires Python 3.11+ or the tomli "
                              "package; use a .json config instead")
        with open(path, "rb") as f:
            try:
                return _toml.load(f)
            except _toml.TOMLDecodeError as e:
                raise ConfigError(f"invalid TOML in {path}: {e}") from e
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e


def apply_overrides(d: dict, overrides) -> dict:
    """Apply dotted key=value strings (values parsed as JSON, else kept raw)."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        if len(keys) < 2:
            raise ConfigError(f"override key must be dotted (section.key): {dotted!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = d
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through non-table key {k!r}")
        node[keys[-1]] = value
    return d


def load_config(path=None, overrides=None) -> RunConfig:
    """Resolve the run configuration: file (or SERVOCLONE_CONFIG), then overrides."""
    if path is None:
        env = os.environ.get(ENV_CONFIG)
        path = Path(env) if env else None
    d = _parse_file(Path(path)) if path is not None else {}
    return config_from_dict(apply_overrides(d, overrides))


def echo_config(cfg: RunConfig, out_dir) -> Path:
    """Write the resolved configuration next to an output for provenance."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "config.json"
    p.write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
    return p
