"""Virtual workspace volume and the corrective safety twist.

The volume is an expression tree of sphere / capped-cylinder / half-space
primitives combined by union and intersection. Signed distance is exact on
primitives; boolean nodes use min/max, which preserves the inside/outside
sign everywhere and the magnitude away from blend regions. All distance
queries accept points of shape (3,) or (..., 3) and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Frame, Pose, Twist

GRAD_STEP = 1e-4  # central-difference step for boundary gradients, meters

MAX_TREE_DEPTH = 16


class TieBreakError(RuntimeError):
    """Raised when no unique direction back into the volume exists."""


@dataclass(frozen=True)
class SafetyConfig:
    gain: float = 2.0        # 1/s, proportional constant on boundary distance
    max_speed: float = 0.5   # m/s, clamp on the corrective speed

    def __post_init__(self):
        if self.gain <= 0 or self.max_speed <= 0:
            raise ValueError("safety gain and max_speed must be positive")


class Volume:
    """Base node of the workspace expression tree."""

    def distance(self, p: np.ndarray) -> np.ndarray:
        """Signed distance to the boundary: negative inside, positive outside."""
        raise NotImplementedError

    def reference_point(self) -> np.ndarray:
        """A point representative of the volume, used for tie-breaking."""
        raise NotImplementedError

    def bounding_radius(self, about: np.ndarray) -> float:
        """Radius of a sphere about `about` containing the volume (may be inf)."""
        raise NotImplementedError

    def depth(self) -> int:
        return 1

    def to_dict(self) -> dict:
        raise NotImplementedError


class Sphere(Volume):
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    def distance(self, p):
        p = np.asarray(p, dtype=np.float64)
        return np.linalg.norm(p - self.center, axis=-1) - self.radius

    def reference_point(self):
        return self.center.copy()

    def bounding_radius(self, about):
        return float(np.linalg.norm(self.center - about) + self.radius)

    def to_dict(self):
        return {"sphere": {"center": self.center.tolist(), "radius": self.radius}}


class Cylinder(Volume):
    """Finite capped cylinder around an arbitrary unit axis (default +z)."""

    def __init__(self, center, radius: float, half_height: float, axis=(0.0, 0.0, 1.0)):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.half_height = float(half_height)
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("cylinder axis must be unit-norm")
        self.axis = axis / n
        if self.radius <= 0 or self.half_height <= 0:
            raise ValueError("cylinder radius and half_height must be positive")

    def distance(self, p):
        p = np.asarray(p, dtype=np.float64)
        rel = p - self.center
        along = np.sum(rel * self.axis, axis=-1)
        radial = rel - along[..., None] * self.axis
        dr = np.linalg.norm(radial, axis=-1) - self.radius
        dz = np.abs(along) - self.half_height
        outside = np.sqrt(np.maximum(dr, 0.0) ** 2 + np.maximum(dz, 0.0) ** 2)
        inside = np.minimum(np.maximum(dr, dz), 0.0)
        return outside + inside

    def reference_point(self):
        return self.center.copy()

    def bounding_radius(self, about):
        extent = float(np.hypot(self.radius, self.half_height))
        return float(np.linalg.norm(self.center - about) + extent)

    def to_dict(self):
        return {"cylinder": {"center": self.center.tolist(), "radius": self.radius,
                             "half_height": self.half_height, "axis": self.axis.tolist()}}


class HalfSpace(Volume):
    """Inside where dot(normal, p) >= offset."""

    def __init__(self, normal, offset: float):
        normal = np.asarray(normal, dtype=np.float64)
        n = np.linalg.norm(normal)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("half-space normal must be unit-norm")
        self.normal = normal / n
        self.offset = float(offset)

    def distance(self, p):
        p = np.asarray(p, dtype=np.float64)
        return self.offset - np.sum(p * self.normal, axis=-1)

    def reference_point(self):
        # Foot of the normal through the origin, on the boundary plane.
        return self.normal * self.offset

    def bounding_radius(self, about):
        return float("inf")

    def to_dict(self):
        return {"half_space": {"normal": self.normal.tolist(), "offset": self.offset}}


class _Boolean(Volume):
    def __init__(self, children):
        self.children = list(children)
        if not self.children:
            raise ValueError("boolean node needs at least one child")
        if self.depth() > MAX_TREE_DEPTH:
            raise ValueError(f"workspace tree deeper than {MAX_TREE_DEPTH}")

    def reference_point(self):
        return np.mean([c.reference_point() for c in self.children], axis=0)

    def depth(self):
        return 1 + max(c.depth() for c in self.children)


class Union(_Boolean):
    def distance(self, p):
        return np.minimum.reduce([c.distance(p) for c in self.children])

    def bounding_radius(self, about):
        return max(c.bounding_radius(about) for c in self.children)

    def to_dict(self):
        return {"union": [c.to_dict() for c in self.children]}


class Intersection(_Boolean):
    def distance(self, p):
        return np.maximum.reduce([c.distance(p) for c in self.children])

    def bounding_radius(self, about):
        # The intersection lies in every child, so any child bound works.
        return min(c.bounding_radius(about) for c in self.children)

    def to_dict(self):
        return {"intersection": [c.to_dict() for c in self.children]}


def volume_from_dict(node: dict) -> Volume:
    """Build a workspace tree from its config-file representation."""
    if not isinstance(node, dict) or len(node) != 1:
        raise ValueError(f"workspace node must be a single-key object, got {node!r}")
    kind, body = next(iter(node.items()))
    if kind == "sphere":
        return Sphere(body["center"], body["radius"])
    if kind == "cylinder":
        return Cylinder(body["center"], body["radius"], body["half_height"],
                        body.get("axis", (0.0, 0.0, 1.0)))
    if kind == "half_space":
        return HalfSpace(body["normal"], body["offset"])
    if kind == "union":
        return Union(volume_from_dict(c) for c in body)
    if kind == "intersection":
        return Intersection(volume_from_dict(c) for c in body)
    raise ValueError(f"unknown workspace node kind {kind!r}")


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def distance_field(vol: Volume, p: np.ndarray) -> np.ndarray:
    return vol.distance(p)


def contains(vol: Volume, p: np.ndarray):
    """True inside or on the boundary."""
    return vol.distance(p) <= 0.0


def nearest_inside_direction(vol: Volume, p: np.ndarray) -> np.ndarray:
    """Unit direction from an outside point toward the volume.

    Normalized negative central-difference gradient of the distance field.
    Raises TieBreakError at degenerate (equidistant) points.
    """
    p = np.asarray(p, dtype=np.float64)
    offsets = np.zeros((6, 3))
    for i in range(3):
        offsets[2 * i, i] = GRAD_STEP
        offsets[2 * i + 1, i] = -GRAD_STEP
    d = vol.distance(p[None, :] + offsets)
    grad = (d[0::2] - d[1::2]) / (2.0 * GRAD_STEP)
    norm = np.linalg.norm(grad)
    if norm < 1e-9:
        raise TieBreakError(f"degenerate boundary gradient at {p.tolist()}")
    return -grad / norm


def safety_twist(vol: Volume, pose: Pose, cfg: SafetyConfig) -> Twist:
    """Corrective world-frame twist: zero inside, proportional pull outside."""
    p = pose.position
    d = float(vol.distance(p))
    if d <= 0.0:
        return Twist.zero(Frame.WORLD)
    try:
        direction = nearest_inside_direction(vol, p)
    except TieBreakError:
        direction = vol.reference_point() - p
        norm = np.linalg.norm(direction)
        if norm < 1e-9:
            raise
        direction = direction / norm
    speed = min(cfg.gain * d, cfg.max_speed)
    return Twist(direction * speed, np.zeros(3), Frame.WORLD)
