import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robofruit_sim.motion import (
    ForceParams,
    InvalidAcceleration,
    Profile,
    SegmentMode,
    SlotOccupied,
    SlotOutOfRange,
    Waypoint,
    WaypointLabel,
    gripping_force_required,
    max_safe_acceleration,
    on_picking_side,
    plan_free,
    plan_lin,
    punnet_slot_pose,
    sample_position,
    slerp,
)
from robofruit_sim.scene import SceneConfig, generate_scene


def _wp(x, y, z):
    return Waypoint(position=np.array([x, y, z], dtype=float))


def test_trapezoid_duration_closed_form():
    # L = 1 m, v = 0.5 m/s, a = 1 m/s^2: cruise is reached,
    # t = L / v + v / a = 2.5 s.
    plan = plan_lin(_wp(0, 0, 0), _wp(1, 0, 0), v_max=0.5, a_max=1.0)
    assert plan.profile is Profile.TRAPEZOID
    assert plan.duration_s == pytest.approx(2.5, abs=1e-12)


def test_triangle_duration_closed_form():
    # L = 0.1 m never reaches 0.5 m/s: t = 2 sqrt(L / a).
    plan = plan_lin(_wp(0, 0, 0), _wp(0.1, 0, 0), v_max=0.5, a_max=1.0)
    assert plan.profile is Profile.TRIANGLE
    assert plan.duration_s == pytest.approx(2.0 * math.sqrt(0.1), abs=1e-12)


def test_zero_length_segment():
    plan = plan_lin(_wp(0.3, 0.1, 0.2), _wp(0.3, 0.1, 0.2))
    assert plan.profile is Profile.ZERO
    assert plan.duration_s == 0.0
    np.testing.assert_array_equal(sample_position(plan, 0.0), [0.3, 0.1, 0.2])


def test_profile_boundary_length():
    # Exactly L = v^2 / a is the degenerate trapezoid with no cruise.
    v, a = 0.5, 1.0
    plan = plan_lin(_wp(0, 0, 0), _wp(v * v / a, 0, 0), v_max=v, a_max=a)
    assert plan.duration_s == pytest.approx(2.0 * v / a, abs=1e-12)


def test_lin_and_free_same_math_different_caps():
    start, goal = _wp(0, 0, 0), _wp(0.8, 0, 0)
    lin = plan_lin(start, goal, v_max=0.2, a_max=0.5)
    free = plan_free(start, goal, v_max=0.2, a_max=0.5)
    assert lin.duration_s == free.duration_s
    assert lin.mode is SegmentMode.LIN and free.mode is SegmentMode.FREE
    assert plan_free(start, goal).duration_s < lin.duration_s


def test_invalid_caps_rejected():
    with pytest.raises(ValueError):
        plan_lin(_wp(0, 0, 0), _wp(1, 0, 0), v_max=0.0, a_max=1.0)
    with pytest.raises(ValueError):
        plan_lin(_wp(0, 0, 0), _wp(1, 0, 0), v_max=0.5, a_max=-1.0)


def _numeric_duration(L, v, a, dt=1e-6):
    """Step a bang-cruise-bang profile until it covers L."""
    x, speed, t = 0.0, 0.0, 0.0
    while x < L:
        brake_dist = speed * speed / (2 * a)
        if L - x <= brake_dist:
            speed = max(0.0, speed - a * dt)
        elif speed < v:
            speed = min(v, speed + a * dt)
        x += speed * dt
        t += dt
        if speed == 0.0 and x < L:
            x = L  # numerical crawl at the very end
    return t


@pytest.mark.parametrize("L,v,a", [(1.0, 0.5, 1.0), (0.1, 0.5, 1.0),
                                   (0.35, 0.2, 0.5), (2.0, 1.0, 2.0)])
def test_duration_matches_numerical_integration(L, v, a):
    plan = plan_lin(_wp(0, 0, 0), _wp(L, 0, 0), v_max=v, a_max=a)
    assert plan.duration_s == pytest.approx(_numeric_duration(L, v, a), abs=2e-3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sampled_path_stays_on_segment_and_respects_speed(seed):
    rng = np.random.default_rng(seed)
    start = _wp(*rng.uniform(-0.5, 0.5, 3))
    goal = _wp(*rng.uniform(-0.5, 0.5, 3))
    v, a = float(rng.uniform(0.1, 1.0)), float(rng.uniform(0.2, 2.0))
    if np.allclose(start.position, goal.position):
        return
    plan = plan_lin(start, goal, v_max=v, a_max=a)
    ts = np.linspace(0.0, plan.duration_s, 101)
    pts = np.array([sample_position(plan, t) for t in ts])
    np.testing.assert_allclose(pts[0], start.position, atol=1e-12)
    np.testing.assert_allclose(pts[-1], goal.position, atol=1e-9)
    # Progress along the chord is monotone and speed never tops v_max.
    d = goal.position - start.position
    s = (pts - start.position) @ d / np.linalg.norm(d)
    assert (np.diff(s) >= -1e-12).all()
    speeds = np.linalg.norm(np.diff(pts, axis=0), axis=1) / np.diff(ts)
    assert speeds.max() <= v + 1e-6


def test_grip_force_equation_frozen():
    p = ForceParams()       # m=0.05, g=9.81, mu=0.3, S=2.0
    want = 0.05 * (9.81 + 2.0) * 2.0 / 0.3
    assert gripping_force_required(p, 2.0) == pytest.approx(want, abs=1e-12)


def test_grip_force_round_trip():
    p = ForceParams()
    for force in (2.0, 5.0, 9.99):
        a = max_safe_acceleration(p, force)
        if a > 0.0:
            assert gripping_force_required(p, a) == pytest.approx(force, abs=1e-9)


def test_max_safe_acceleration_floors_at_zero():
    p = ForceParams()
    static = gripping_force_required(p, 0.0)
    assert max_safe_acceleration(p, 0.5 * static) == 0.0


def test_acceleration_below_free_fall_rejected():
    with pytest.raises(InvalidAcceleration):
        gripping_force_required(ForceParams(), -9.82)


def test_punnet_slots_distinct_and_inside_footprint():
    punnet = generate_scene(SceneConfig(berry_count=1), 0).punnet
    empty = (None,) * 6
    poses = [punnet_slot_pose(punnet, k, empty).position for k in range(6)]
    for i in range(6):
        for j in range(i + 1, 6):
            assert np.linalg.norm(poses[i] - poses[j]) > 1e-6
    # Diagonal extremes of the 2 x 3 grid are the farthest pair.
    gaps = [(np.linalg.norm(a - b)) for a in poses for b in poses]
    assert np.linalg.norm(poses[0] - poses[5]) == pytest.approx(max(gaps))


def test_punnet_slot_errors():
    punnet = generate_scene(SceneConfig(berry_count=1), 0).punnet
    with pytest.raises(SlotOutOfRange):
        punnet_slot_pose(punnet, 6, (None,) * 6)
    with pytest.raises(SlotOccupied):
        punnet_slot_pose(punnet, 1, (None, 4, None, None, None, None))


def test_on_picking_side_plane_test():
    assert on_picking_side(np.array([0.40, 0.0, 0.3]), table_plane_x=0.52)
    assert not on_picking_side(np.array([0.53, 0.0, 0.3]), table_plane_x=0.52)


def test_slerp_endpoints_and_midpoint():
    q0 = np.array([1.0, 0.0, 0.0, 0.0])
    # 90 degrees about z.
    q1 = np.array([math.cos(math.pi / 4), 0.0, 0.0, math.sin(math.pi / 4)])
    np.testing.assert_allclose(slerp(q0, q1, 0.0), q0, atol=1e-12)
    np.testing.assert_allclose(slerp(q0, q1, 1.0), q1, atol=1e-12)
    mid = slerp(q0, q1, 0.5)
    want = np.array([math.cos(math.pi / 8), 0.0, 0.0, math.sin(math.pi / 8)])
    np.testing.assert_allclose(mid, want, atol=1e-12)
    assert np.linalg.norm(mid) == pytest.approx(1.0, abs=1e-12)


def test_waypoint_requires_unit_quaternion():
    with pytest.raises(ValueError):
        Waypoint(position=np.zeros(3), orientation=np.array([1.0, 1.0, 0.0, 0.0]))
    wp = Waypoint(position=np.zeros(3), label=WaypointLabel.HOME)
    np.testing.assert_array_equal(wp.orientation, [1.0, 0.0, 0.0, 0.0])
