import numpy as np
import pytest

from servoclone.geometry import Frame, Pose, quat_identity
from servoclone.workspace import (Cylinder, HalfSpace, Intersection, SafetyConfig,
                                  Sphere, TieBreakError, Union, contains,
                                  distance_field, nearest_inside_direction,
                                  safety_twist, volume_from_dict)


def make_pose(p):
    return Pose(np.asarray(p, dtype=float), quat_identity())


# --- primitive signed distances -------------------------------------------

def test_sphere_distance_signs():
    s = Sphere([0.0, 0.0, 0.0], 1.0)
    assert distance_field(s, np.array([0.0, 0.0, 0.0])) == pytest.approx(-1.0)
    assert distance_field(s, np.array([2.0, 0.0, 0.0])) == pytest.approx(1.0)
    assert distance_field(s, np.array([0.0, 1.0, 0.0])) == pytest.approx(0.0)


def test_sphere_distance_is_exact_euclidean():
    rng = np.random.default_rng(10)
    s = Sphere([0.5, -0.2, 1.0], 0.7)
    pts = rng.normal(size=(200, 3)) * 2.0
    d = distance_field(s, pts)
    ref = np.linalg.norm(pts - np.array([0.5, -0.2, 1.0]), axis=1) - 0.7
    assert np.allclose(d, ref, atol=1e-12)


def test_halfspace_distance():
    # inside where dot(normal, p) >= offset, i.e. z >= 0.1 here
    h = HalfSpace([0.0, 0.0, 1.0], 0.1)
    assert contains(h, np.array([0.0, 0.0, 0.1]))
    assert distance_field(h, np.array([5.0, 5.0, 0.6])) == pytest.approx(-0.5)
    assert distance_field(h, np.array([0.0, 0.0, -0.4])) == pytest.approx(0.5)


def test_cylinder_distance_cases():
    c = Cylinder([0.0, 0.0, 0.0], radius=1.0, half_height=0.5)
    # radially outside, within height band
    assert distance_field(c, np.array([2.0, 0.0, 0.0])) == pytest.approx(1.0)
    # above the cap, within radius
    assert distance_field(c, np.array([0.0, 0.0, 1.5])) == pytest.approx(1.0)
    # outside corner: true distance is hypot of both overshoots
    d = distance_field(c, np.array([2.0, 0.0, 1.5]))
    assert d == pytest.approx(np.hypot(1.0, 1.0))
    # inside: distance to nearest face
    assert distance_field(c, np.array([0.0, 0.0, 0.0])) == pytest.approx(-0.5)
    assert distance_field(c, np.array([0.8, 0.0, 0.0])) == pytest.approx(-0.2)


def test_cylinder_off_axis():
    c = Cylinder([1.0, 2.0, 3.0], radius=0.5, half_height=1.0, axis=[1.0, 0.0, 0.0])
    # along the axis from the center: hits the cap at distance 1
    assert distance_field(c, np.array([3.0, 2.0, 3.0])) == pytest.approx(1.0)
    # radially from the axis
    assert distance_field(c, np.array([1.0, 2.0, 4.0])) == pytest.approx(0.5)


def test_boolean_union_and_intersection():
    a = Sphere([0.0, 0.0, 0.0], 1.0)
    b = Sphere([1.5, 0.0, 0.0], 1.0)
    u = Union((a, b))
    i = Intersection((a, b))
    p = np.array([0.75, 0.0, 0.0])          # inside both
    assert distance_field(u, p) == pytest.approx(min(a.distance(p), b.distance(p)))
    assert distance_field(i, p) == pytest.approx(max(a.distance(p), b.distance(p)))
    q = np.array([-1.5, 0.0, 0.0])          # inside neither
    assert not contains(u, q)
    r = np.array([-0.5, 0.0, 0.0])          # inside a only
    assert contains(u, r)
    assert not contains(i, r)


def test_distance_broadcasts_over_grids():
    vol = Union((Sphere([0, 0, 0], 1.0), HalfSpace([0, 0, 1.0], -2.0)))
    pts = np.zeros((4, 5, 3))
    pts[..., 0] = np.linspace(-2, 2, 5)
    d = distance_field(vol, pts)
    assert d.shape == (4, 5)
    assert np.allclose(d[0], d[3])


def test_volume_dict_roundtrip():
    rng = np.random.default_rng(11)
    vol = Intersection((
        HalfSpace([0.0, 0.0, 1.0], 0.01),
        Union((Sphere([0.2, 0.1, 0.3], 0.65),
               Cylinder([0.0, 0.0, 0.0], 0.3, 0.2))),
    ))
    clone = volume_from_dict(vol.to_dict())
    pts = rng.normal(size=(300, 3))
    assert np.array_equal(distance_field(vol, pts), distance_field(clone, pts))


def test_volume_from_dict_rejects_unknown_kind():
    with pytest.raises(ValueError):
        volume_from_dict({"kind": "torus", "center": [0, 0, 0]})


# --- gradient direction ---------------------------------------------------

def test_nearest_inside_direction_points_at_sphere_center():
    s = Sphere([1.0, 2.0, 3.0], 0.5)
    rng = np.random.default_rng(12)
    for _ in range(30):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        p = np.array([1.0, 2.0, 3.0]) + v * rng.uniform(1.0, 3.0)
        d = nearest_inside_direction(s, p)
        assert np.allclose(d, -v, atol=1e-6)


def test_nearest_inside_direction_halfspace():
    # inside is z >= 0; from below, the way back in is straight up
    h = HalfSpace([0.0, 0.0, 1.0], 0.0)
    d = nearest_inside_direction(h, np.array([3.0, -2.0, -1.0]))
    assert np.allclose(d, [0.0, 0.0, 1.0], atol=1e-9)


def test_tie_break_at_equidistant_point():
    # Two spheres symmetric about the origin: the midpoint gradient cancels.
    u = Union((Sphere([-1.0, 0.0, 0.0], 0.2), Sphere([1.0, 0.0, 0.0], 0.2)))
    with pytest.raises(TieBreakError):
        nearest_inside_direction(u, np.array([0.0, 0.0, 0.0]))


# --- safety twist ---------------------------------------------------------

def test_safety_twist_zero_inside():
    vol = Sphere([0.0, 0.0, 0.0], 1.0)
    cfg = SafetyConfig()
    rng = np.random.default_rng(13)
    for _ in range(200):
        v = rng.normal(size=3)
        p = v / np.linalg.norm(v) * rng.uniform(0.0, 0.999)
        t = safety_twist(vol, make_pose(p), cfg)
        assert t.frame is Frame.WORLD
        assert np.array_equal(t.linear, np.zeros(3))
        assert np.array_equal(t.angular, np.zeros(3))


def test_safety_twist_proportional_law():
    vol = Sphere([0.0, 0.0, 0.0], 1.0)
    cfg = SafetyConfig(gain=2.0, max_speed=0.5)
    for dist in (0.01, 0.1, 0.2, 0.24999, 0.25, 0.3, 1.0, 10.0):
        p = np.array([1.0 + dist, 0.0, 0.0])
        t = safety_twist(vol, make_pose(p), cfg)
        expect = min(cfg.gain * dist, cfg.max_speed)
        assert np.linalg.norm(t.linear) == pytest.approx(expect, abs=1e-9)
        # pulls along -x, back toward the sphere
        assert t.linear[0] < 0


def test_safety_twist_never_exceeds_max_speed():
    vol = Intersection((HalfSpace([0, 0, 1.0], 0.0), Sphere([0, 0, 0], 2.0)))
    cfg = SafetyConfig(gain=5.0, max_speed=0.4)
    rng = np.random.default_rng(14)
    for _ in range(100):
        p = rng.normal(size=3) * 5.0
        t = safety_twist(vol, make_pose(p), cfg)
        assert np.linalg.norm(t.linear) <= cfg.max_speed + 1e-12


def test_safety_twist_angular_always_zero():
    vol = Sphere([0, 0, 0], 0.5)
    t = safety_twist(vol, make_pose([2.0, 0.0, 0.0]), SafetyConfig())
    assert np.array_equal(t.angular, np.zeros(3))


def test_safety_twist_tie_break_falls_back_to_reference():
    # Equidistant between the two lobes, so the gradient cancels, but the
    # lobes differ in size and the union's reference point (mean of centers)
    # still gives a pull direction (+x toward the bigger sphere's side).
    u = Union((Sphere([-1.0, 0.0, 0.0], 0.2), Sphere([1.5, 0.0, 0.0], 0.7)))
    t = safety_twist(u, make_pose([0.0, 0.0, 0.0]), SafetyConfig())
    assert t.linear[0] > 0.0
    assert np.linalg.norm(t.linear) == pytest.approx(0.5)  # capped at max_speed


def test_safety_twist_fully_degenerate_point_raises():
    # Perfect symmetry: gradient cancels and the reference point coincides
    # with the query point, so no direction exists at all.
    u = Union((Sphere([-1.0, 0.0, 0.0], 0.2), Sphere([1.0, 0.0, 0.0], 0.2)))
    with pytest.raises(TieBreakError):
        safety_twist(u, make_pose([0.0, 0.0, 0.0]), SafetyConfig())


def test_safety_config_validation():
    with pytest.raises(ValueError):
        SafetyConfig(gain=0.0)
    with pytest.raises(ValueError):
        SafetyConfig(max_speed=-1.0)


def test_boundary_crossing_discretization():
    # A point drifting out of a sphere under the safety pull settles near the
    # boundary: equilibrium of gain*d against a constant outward drift.
    vol = Sphere([0.0, 0.0, 0.0], 1.0)
    cfg = SafetyConfig(gain=2.0, max_speed=0.5)
    dt = 1.0 / 30.0
    drift = np.array([0.3, 0.0, 0.0])
    p = np.array([0.9, 0.0, 0.0])
    for _ in range(600):
        t = safety_twist(vol, make_pose(p), cfg)
        p = p + (drift + t.linear) * dt
    d = float(distance_field(vol, p))
    # equilibrium at gain*d = |drift| => d = 0.15, plus one-step slack
    assert d <= 0.15 + np.linalg.norm(drift) * dt + 1e-9
