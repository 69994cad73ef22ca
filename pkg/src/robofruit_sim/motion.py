"""Straight-line trajectory timing, gripping-force limits, and waypoints.

Linear segments follow a trapezoidal velocity profile under symmetric
acceleration and deceleration caps.  When the segment is too short to reach
cruise speed the profile degenerates to a triangle.  Durations are what the
simulator charges against the clock; intermediate poses are available through
interpolation helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class SegmentMode(str, Enum):
    LIN = "lin"
    FREE = "free"


class Profile(str, Enum):
    TRAPEZOID = "trapezoid"
    TRIANGLE = "triangle"
    ZERO = "zero"


class WaypointLabel(str, Enum):
    HOME = "home"
    PRE_GRASP = "pre_grasp"
    PICK = "pick"
    RETREAT = "retreat"
    PUNNET = "punnet"
    ADJUST = "adjust"


@dataclass(frozen=True)
class Waypoint:
    """Position plus unit quaternion (w, x, y, z) in the base frame."""

    position: np.ndarray
    orientation: np.ndarray = None
    label: WaypointLabel = WaypointLabel.PICK

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        quat = (np.array([1.0, 0.0, 0.0, 0.0]) if self.orientation is None
                else np.asarray(self.orientation, dtype=float).reshape(4))
        n = np.linalg.norm(quat)
        if not math.isclose(n, 1.0, rel_tol=0, abs_tol=1e-6):
            raise ValueError("orientation quaternion must be unit length")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", quat / n)


@dataclass(frozen=True)
class SegmentPlan:
    start: Waypoint
    goal: Waypoint
    mode: SegmentMode
    profile: Profile
    length: float
    v_max: float
    a_max: float
    duration_s: float


def _timed(start: Waypoint, goal: Waypoint, mode: SegmentMode,
           v_max: float, a_max: float) -> SegmentPlan:
    if v_max <= 0 or a_max <= 0:
        raise ValueError("speed and acceleration caps must be positive")
    length = float(np.linalg.norm(goal.position - start.position))
    if length == 0.0:
        return SegmentPlan(start, goal, mode, Profile.ZERO, 0.0, v_max, a_max, 0.0)
    # Cruise speed is reachable when accel and decel ramps fit inside the
    # segment: L >= v^2 / a.
    if length >= v_max * v_max / a_max:
        duration = v_max / a_max + length / v_max
        profile = Profile.TRAPEZOID
    else:
        duration = 2.0 * math.sqrt(length / a_max)
        profile = Profile.TRIANGLE
    return SegmentPlan(start, goal, mode, profile, length, v_max, a_max, duration)


def plan_lin(start: Waypoint, goal: Waypoint, v_max: float = 0.2,
             a_max: float = 0.5) -> SegmentPlan:
    """Time a straight LIN segment under the given caps.

    Raises:
        ValueError: on non-positive caps.
    """
    return _timed(start, goal, SegmentMode.LIN, v_max, a_max)


def plan_free(start: Waypoint, goal: Waypoint, v_max: float = 1.0,
              a_max: float = 2.0) -> SegmentPlan:
    """Time a free-space move; same math as LIN with looser default caps."""
    return _timed(start, goal, SegmentMode.FREE, v_max, a_max)


def slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation between unit quaternions, shortest arc."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(q0 @ q1)
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 1.0 - 1e-10:
        out = q0 + t * (q1 - q0)
        return out / np.linalg.norm(out)
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return (math.sin((1 - t) * theta) * q0 + math.sin(t * theta) * q1) / s


def sample_position(plan: SegmentPlan, t: float) -> np.ndarray:
    """Position along the segment at time t, clamped to the endpoints."""
    if plan.duration_s == 0.0 or t <= 0.0:
        return plan.start.position.copy()
    if t >= plan.duration_s:
        return plan.goal.position.copy()
    a, v, L = plan.a_max, plan.v_max, plan.length
    if plan.profile is Profile.TRIANGLE:
        v_peak = math.sqrt(L * a)
        t_half = plan.duration_s / 2.0
        if t <= t_half:
            s = 0.5 * a * t * t
        else:
            dt = plan.duration_s - t
            s = L - 0.5 * a * dt * dt
    else:
        t_ramp = v / a
        if t <= t_ramp:
            s = 0.5 * a * t * t
        elif t <= plan.duration_s - t_ramp:
            s = 0.5 * v * t_ramp + v * (t - t_ramp)
        else:
            dt = plan.duration_s - t
            s = L - 0.5 * a * dt * dt
    direction = (plan.goal.position - plan.start.position) / L
    return plan.start.position + s * direction


@dataclass(frozen=True)
class ForceParams:
    """Grip and cut force model parameters.

    ``safety`` scales the theoretical grip requirement; ``mu`` is the
    finger-fruit friction coefficient.  ``grip_limit`` is the most force the
    fruit may see; ``cut_capability`` is what the blade can deliver.
    """

    mass_kg: float = 0.05
    g: float = 9.81
    mu: float = 0.3
    safety: float = 2.0
    grip_limit_n: float = 10.0
    cut_capability_n: float = 15.0

    def __post_init__(self):
        if self.mass_kg <= 0:
            raise ValueError("mass must be positive")
        if not 0 < self.mu <= 1.5:
            raise ValueError("mu must lie in (0, 1.5]")
        if self.safety < 1.0:
            raise ValueError("safety factor must be at least 1")


class InvalidAcceleration(ValueError):
    """Raised for accelerations below free fall, where grip force loses meaning."""


def gripping_force_required(params: ForceParams, acceleration: float) -> float:
    """Force needed to hold the fruit while accelerating it vertically.

    F = m (g + a) S / mu: the fruit must not slip between the fingers while
    the head accelerates at ``a``.

    Raises:
        InvalidAcceleration: when acceleration < -g.
    """
    if acceleration < -params.g:
        raise InvalidAcceleration(f"acceleration {acceleration} below free fall")
    return params.mass_kg * (params.g + acceleration) * params.safety / params.mu


def max_safe_acceleration(params: ForceParams, available_force_n: float) -> float:
    """Largest post-cut acceleration the available grip force permits.

    Inverts the grip equation and floors at zero, so a force below the static
    holding requirement yields no allowance rather than a negative one.
    """
    a = available_force_n * params.mu / (params.mass_kg * params.safety) - params.g
    return max(0.0, a)


class SlotOutOfRange(IndexError):
    pass


class SlotOccupied(ValueError):
    pass


def punnet_slot_pose(punnet, k: int, occupancy=None) -> Waypoint:
    """Waypoint over slot k of the punnet.

    Slots are numbered row-major on the 2 x 3 grid, so 0 and 5 are diagonal
    extremes.  ``occupancy`` defaults to the punnet's own record.

    Raises:
        SlotOutOfRange: for k outside [0, 6).
        SlotOccupied: when the slot already holds a berry.
    """
    offsets = punnet.slot_offsets()
    if not 0 <= k < len(offsets):
        raise SlotOutOfRange(f"slot {k} outside [0, {len(offsets)})")
    occ = punnet.occupancy if occupancy is None else occupancy
    if occ[k] is not None:
        raise SlotOccupied(f"slot {k} already holds berry {occ[k]}")
    position = punnet.pose.apply(offsets[k])
    return Waypoint(position=position, orientation=_mat_to_quat(punnet.pose.rotation),
                    label=WaypointLabel.PUNNET)


def _mat_to_quat(rot: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z)."""
    m = np.asarray(rot, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z])
    return q / np.linalg.norm(q)


def on_picking_side(position: np.ndarray, table_plane_x: float) -> bool:
    """Half-space collision check: the head must stay on the robot side."""
    return float(position[0]) <= table_plane_x
