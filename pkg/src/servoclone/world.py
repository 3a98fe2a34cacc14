"""Kinematic world: a cup on a table seen by an eye-in-hand pinhole camera.

The camera sits rigidly at the end-effector frame with its optical axis along
EE +z, image x along EE +x and image y along EE +y. Images are (H, W, 3)
float arrays with channels in [0, 1]. Rendering is a flat-shaded, z-buffered
ray test per pixel and is bit-deterministic for identical inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Frame, Pose, Twist, integrate_pose, quat_from_axis_angle

_NEAR_CLIP = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 64
    height: int = 64
    fx: float = 48.0
    fy: float = 48.0
    cx: float = 32.0
    cy: float = 32.0

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("image must be at least 16x16")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @staticmethod
    def square(size: int, focal_scale: float = 0.75) -> "CameraIntrinsics":
        """Square image with focal length focal_scale * size."""
        f = focal_scale * size
        return CameraIntrinsics(size, size, f, f, size / 2.0, size / 2.0)


@dataclass(frozen=True)
class Scene:
    cup_position: np.ndarray = field(default_factory=lambda: np.array([0.4, 0.0, 0.0]))
    cup_radius: float = 0.04
    cup_height: float = 0.10
    cup_color: tuple = (0.75, 0.12, 0.10)
    table_color: tuple = (0.55, 0.47, 0.36)
    background_color: tuple = (0.70, 0.80, 0.90)
    table_plane_z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cup_position", np.asarray(self.cup_position, dtype=np.float64))
        if self.cup_radius <= 0 or self.cup_height <= 0:
            raise ValueError("cup radius and height must be positive")
        for c in (self.cup_color, self.table_color, self.background_color):
            if len(c) != 3 or any(not (0.0 <= v <= 1.0) for v in c):
                raise ValueError(f"colors must be RGB triplets in [0,1], got {c}")

    @property
    def cup_top_z(self) -> float:
        return float(self.cup_position[2]) + self.cup_height


@dataclass(frozen=True)
class GoalSpec:
    hover_height: float = 0.05    # above the cup rim
    pos_tolerance: float = 0.03
    axis_tolerance: float = np.deg2rad(10.0)

    def __post_init__(self):
        if self.hover_height <= 0 or self.pos_tolerance <= 0 or self.axis_tolerance <= 0:
            raise ValueError("goal tolerances must be positive")


@dataclass(frozen=True)
class SimState:
    ee_pose: Pose
    sim_time: float = 0.0


def straight_down_quat() -> np.ndarray:
    """Orientation whose +z (optical axis) points along world -z."""
    return quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.pi)


def hover_point(scene: Scene, goal: GoalSpec) -> np.ndarray:
    """The goal position: on the cup axis, hover_height above the rim."""
    return scene.cup_position + np.array([0.0, 0.0, scene.cup_height + goal.hover_height])


def render(scene: Scene, camera_pose: Pose, intr: CameraIntrinsics,
           noise_sigma: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Rasterize the scene from the camera pose. Returns (H, W, 3) float32."""
    h, w = intr.height, intr.width
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    dx = (jj + 0.5 - intr.cx) / intr.fx
    dy = (ii + 0.5 - intr.cy) / intr.fy
    dirs_cam = np.stack([dx, dy, np.ones_like(dx)], axis=-1)
    R = camera_pose.rotation_matrix()
    dirs = dirs_cam @ R.T            # (H, W, 3) world-frame ray directions
    origin = camera_pose.position

    t_hit = np.full((h, w), np.inf)
    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = scene.background_color

    def shade(t, valid, color):
        nonlocal t_hit
        mask = valid & (t > _NEAR_CLIP) & (t < t_hit)
        t_hit = np.where(mask, t, t_hit)
        img[mask] = color

    # Table plane z = table_plane_z.
    dz = dirs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_table = (scene.table_plane_z - origin[2]) / dz
    shade(t_table, np.abs(dz) > 1e-12, scene.table_color)

    # Cup lateral surface: vertical cylinder from base to rim.
    cup = scene.cup_position
    base_z, top_z = float(cup[2]), scene.cup_top_z
    ox, oy = origin[0] - cup[0], origin[1] - cup[1]
    ddx, ddy = dirs[..., 0], dirs[..., 1]
    a = ddx**2 + ddy**2
    b = 2.0 * (ox * ddx + oy * ddy)
    c = ox**2 + oy**2 - scene.cup_radius**2
    disc = b**2 - 4.0 * a * c
    has_root = (disc >= 0.0) & (a > 1e-12)
    sq = np.sqrt(np.where(has_root, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for t_side in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
            z_at = origin[2] + t_side * dz
            shade(t_side, has_root & (z_at >= base_z) & (z_at <= top_z), scene.cup_color)

    # Cup top disk at the rim.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_top = (top_z - origin[2]) / dz
    px = origin[0] + t_top * ddx - cup[0]
    py = origin[1] + t_top * ddy - cup[1]
    in_disk = px**2 + py**2 <= scene.cup_radius**2
    shade(t_top, (np.abs(dz) > 1e-12) & in_disk, scene.cup_color)

    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)
        np.clip(img, 0.0, 1.0, out=img)
    return img.astype(np.float32)


def step(state: SimState, twist: Twist, dt: float) -> SimState:
    """Advance the simulator by one velocity-command step."""
    return SimState(integrate_pose(state.ee_pose, twist, dt), state.sim_time + dt)


def is_success(state: SimState, scene: Scene, goal: GoalSpec) -> bool:
    """Hovering above the cup with the camera looking straight into it."""
    ee = state.ee_pose.position
    radial = np.linalg.norm(ee[:2] - scene.cup_position[:2])
    if radial > goal.pos_tolerance:
        return False
    target_z = scene.cup_top_z + goal.hover_height
    if abs(ee[2] - target_z) > goal.pos_tolerance:
        return False
    axis = state.ee_pose.rotation_matrix() @ np.array([0.0, 0.0, 1.0])
    angle = np.arccos(np.clip(-axis[2], -1.0, 1.0))
    return bool(angle <= goal.axis_tolerance)


def write_ppm(image: np.ndarray, path) -> None:
    """Write an image as binary PPM (P6, 8-bit, value = round(255 * v))."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())
