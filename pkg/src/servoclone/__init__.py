"""Behavior-cloned visual servoing at desk scale, fully simulated.

The pipeline: record twist-labeled camera frames from a teacher (scripted
proportional controller or a human over the teleop protocol), train a small
residual CNN mapping images to end-effector twists, run it in a 30 Hz loop
under a geometric workspace-safety layer, and measure success rate as a
function of demonstration time.
"""

from .geometry import (Frame, Pose, Twist, clamp_twist, integrate_pose,
                       twist_ee_to_world, twist_world_to_ee)
from .workspace import (Cylinder, HalfSpace, Intersection, SafetyConfig, Sphere,
                        TieBreakError, Union, Volume, contains, distance_field,
                        nearest_inside_direction, safety_twist, volume_from_dict)
from .world import (CameraIntrinsics, GoalSpec, Scene, SimState, hover_point,
                    is_success, render, step, straight_down_quat, write_ppm)
from .data import (DemoClock, DemoDataset, DemoFrame, Episode, load,
                   quantize_image, quantize_twist, record_episode, save,
                   split_by_time)
from .nn import (Adam, CheckpointError, PolicyNet, SGDMomentum, TrainConfig,
                 TwistPolicy, load_checkpoint, save_checkpoint, train, twist_loss)
from .control import (ControlConfig, EmergencyStopError, EpisodeResult,
                      aggregate_twist, control_step, default_workspace,
                      policy_from_expert, policy_from_net, run_episode,
                      run_episodes_batched)
from .expert import (Band, ExpertConfig, SamplerConfig, expert_twist,
                     generate_expert_demos, sample_initial_pose)
from .ablation import (AblationConfig, AblationReport, CheckpointResult,
                       TrialResult, emit_report, eval_poses, run_ablation)
from .config import RunConfig, load_config

__version__ = "0.1.0"
