"""Picking head: separators, gripper-cutter, and colour-based verification.

The head carries two separator paddles, a pair of gripping fingers with a
blade a fixed distance below them, and the close-range cameras.  Gripping
and cutting are one coupled action on real hardware, so they are one call
here.  Verification works on rendered close-range patches: a pixel counts as
"red" when its HSV value falls in either of two hue bands, and decision
thresholds apply to the red ratio inside the region between the fingers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .geometry import BoundingBox
from .motion import ForceParams
from .scene import Berry, VarietyParams
from .sensors import ColorPatch


class SeparatorState(str, Enum):
    CLOSED = "closed"
    OPEN = "open"


class GripperState(str, Enum):
    OPEN = "open"
    GRIPPING = "gripping"


class CutterState(str, Enum):
    IDLE = "idle"
    FIRED = "fired"


class GripOutcome(str, Enum):
    SUCCESS = "success"
    PARTIAL_CUT = "partial_cut"
    MISSED = "missed"


class IllegalStateTransition(RuntimeError):
    """Raised when an actuation is requested from the wrong state."""


@dataclass(frozen=True)
class CaptureWindow:
    """Tolerance box around the commanded pose inside which the stem is
    actually caught between the fingers (metres)."""

    half_width_y: float = 0.010
    half_height_z: float = 0.010


@dataclass(frozen=True)
class EffectorState:
    separators: SeparatorState = SeparatorState.CLOSED
    gripper: GripperState = GripperState.OPEN
    cutter: CutterState = CutterState.IDLE
    held_berry_id: Optional[int] = None
    applied_grip_force_n: Optional[float] = None

    @staticmethod
    def initial() -> "EffectorState":
        return EffectorState()


def open_separators(state: EffectorState, target: Berry,
                    ee_position: np.ndarray, occluders_present: set,
                    success_prob: float, rng: np.random.Generator,
                    engagement_distance: float = 0.25) -> tuple:
    """Push neighbouring fruit aside before the grasp.

    Each occluder is displaced independently with ``success_prob``.  When the
    head is farther than ``engagement_distance`` from the target the paddles
    sweep air and nothing moves.

    Returns:
        (new_state, displaced_ids): separators end OPEN either way.

    Raises:
        IllegalStateTransition: when the separators are already open.
    """
    if state.separators is SeparatorState.OPEN:
        raise IllegalStateTransition("separators already open")
    new_state = replace(state, separators=SeparatorState.OPEN)
    ee = np.asarray(ee_position, dtype=float)
    if np.linalg.norm(ee - target.key_points.pp) > engagement_distance:
        return new_state, set()
    displaced = {i for i in sorted(occluders_present) if rng.random() < success_prob}
    return new_state, displaced


def close_separators(state: EffectorState) -> EffectorState:
    if state.separators is not SeparatorState.OPEN:
        raise IllegalStateTransition("separators are not open")
    return replace(state, separators=SeparatorState.CLOSED)


def grip_and_cut(state: EffectorState, berry: Berry, commanded: np.ndarray,
                 variety: VarietyParams, window: CaptureWindow,
                 force: ForceParams, rng: np.random.Generator,
                 occluders_present: set, applied_force_n: float) -> tuple:
    """Close the fingers on the stem and fire the blade, one coupled action.

    The stem is caught when the commanded pose sits within the capture
    window of the true picking point laterally and vertically, and no
    occluder is still in the way.  The blade then severs the stem when the
    cutter can deliver the force a stem of this diameter demands; stem cut
    force scales with the diameter squared.

    Returns:
        (new_state, outcome, residual_stem_m): residual stem length is None
        unless the cut succeeded.

    Raises:
        IllegalStateTransition: unless gripper is OPEN and cutter IDLE.
        ValueError: when the applied force exceeds the fruit's grip limit.
    """
    if state.gripper is not GripperState.OPEN or state.cutter is not CutterState.IDLE:
        raise IllegalStateTransition("gripper must be open and cutter idle")
    if applied_force_n > force.grip_limit_n:
        raise ValueError(f"applied force {applied_force_n} N exceeds the "
                         f"{force.grip_limit_n} N grip limit")
    cmd = np.asarray(commanded, dtype=float)
    pp = berry.key_points.pp
    dy = abs(cmd[1] - pp[1])
    dz = abs(cmd[2] - pp[2])
    fired = replace(state, gripper=GripperState.GRIPPING, cutter=CutterState.FIRED,
                    applied_grip_force_n=applied_force_n)
    if dy > window.half_width_y or dz > window.half_height_z or occluders_present:
        return fired, GripOutcome.MISSED, None
    required = variety.peak_cut_force_n * (berry.stem_diameter_mm
                                           / variety.stem_diameter_mean_mm) ** 2
    if force.cut_capability_n < required:
        return fired, GripOutcome.PARTIAL_CUT, None
    # The blade lands at the commanded height plus a little mechanical
    # scatter, so the stem left on the fruit runs from the flesh junction up
    # to that plane.
    blade_z = cmd[2] + rng.normal(0.0, 0.001)
    residual = max(0.0, float(blade_z - berry.key_points.top[2]))
    held = replace(fired, held_berry_id=berry.id)
    return held, GripOutcome.SUCCESS, residual


def release(state: EffectorState) -> EffectorState:
    """Open the fingers and re-arm the cutter; drops any held berry."""
    if state.gripper is not GripperState.GRIPPING:
        raise IllegalStateTransition("gripper is not gripping")
    return replace(state, gripper=GripperState.OPEN, cutter=CutterState.IDLE,
                   held_berry_id=None, applied_grip_force_n=None)


# --- colour verification ----------------------------------------------------


@dataclass(frozen=True)
class HsvRange:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        if any(l > u for l, u in zip(self.lower, self.upper)):
            raise ValueError("HSV range lower bound exceeds upper bound")

    def contains(self, h: int, s: int, v: int) -> bool:
        return (self.lower[0] <= h <= self.upper[0]
                and self.lower[1] <= s <= self.upper[1]
                and self.lower[2] <= v <= self.upper[2])


@dataclass(frozen=True)
class HsvRanges:
    """The two hue bands that together cover red on the 0..179 hue wheel."""

    low: HsvRange = field(default_factory=lambda: HsvRange((0, 100, 20), (10, 255, 255)))
    high: HsvRange = field(default_factory=lambda: HsvRange((160, 100, 20), (179, 255, 255)))

    def is_red(self, h: int, s: int, v: int) -> bool:
        return self.low.contains(h, s, v) or self.high.contains(h, s, v)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def rgb_to_hsv(r: int, g: int, b: int) -> tuple:
    """8-bit RGB to hexcone HSV with H in [0, 179], S and V in [0, 255].

    Hue is computed in degrees, halved, and rounded half-up so the full
    wheel fits the byte range; values that round to 180 wrap to 0.
    """
    for c in (r, g, b):
        if not 0 <= c <= 255:
            raise ValueError("RGB channels must lie in [0, 255]")
    mx = max(r, g, b)
    mn = min(r, g, b)
    v = mx
    s = 0 if mx == 0 else _round_half_up(255.0 * (mx - mn) / mx)
    if mx == mn:
        h_deg = 0.0
    elif mx == r:
        h_deg = (60.0 * (g - b) / (mx - mn)) % 360.0
    elif mx == g:
        h_deg = 60.0 * (b - r) / (mx - mn) + 120.0
    else:
        h_deg = 60.0 * (r - g) / (mx - mn) + 240.0
    h = _round_half_up(h_deg / 2.0) % 180
    return h, s, v


def _hsv_planes(rgb: np.ndarray) -> tuple:
    """Vectorised rgb_to_hsv over an (h, w, 3) uint8 image."""
    arr = rgb.astype(np.int64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    span = mx - mn
    v = mx
    s = np.where(mx == 0, 0,
                 np.floor(255.0 * span / np.where(mx == 0, 1, mx) + 0.5).astype(np.int64))
    span_safe = np.where(span == 0, 1, span)
    h_deg = np.where(
        span == 0, 0.0,
        np.where(mx == r, (60.0 * (g - b) / span_safe) % 360.0,
                 np.where(mx == g, 60.0 * (b - r) / span_safe + 120.0,
                          60.0 * (r - g) / span_safe + 240.0)))
    h = np.floor(h_deg / 2.0 + 0.5).astype(np.int64) % 180
    return h, s, v


def red_mask_ratio(patch: ColorPatch, region: Optional[BoundingBox] = None,
                   ranges: Optional[HsvRanges] = None) -> float:
    """Fraction of region pixels whose HSV colour falls in a red band.

    ``region`` is in patch coordinates and defaults to the whole patch.

    Raises:
        ValueError: when the region is empty or leaves the patch.
    """
    ranges = ranges or HsvRanges()
    img = patch.rgb
    if region is not None:
        x1, y1 = int(region.xp1), int(region.yp1)
        x2, y2 = int(region.xp2), int(region.yp2)
        if x1 < 0 or y1 < 0 or x2 >= img.shape[1] or y2 >= img.shape[0]:
            raise ValueError("region leaves the patch")
        img = img[y1:y2 + 1, x1:x2 + 1]
    if img.size == 0:
        raise ValueError("empty region")
    h, s, v = _hsv_planes(img)

    def in_band(band: HsvRange) -> np.ndarray:
        lo, hi = band.lower, band.upper
        return ((h >= lo[0]) & (h <= hi[0]) & (s >= lo[1]) & (s <= hi[1])
                & (v >= lo[2]) & (v <= hi[2]))

    red = in_band(ranges.low) | in_band(ranges.high)
    return float(red.sum()) / float(red.size)


def cutting_confirmed(red_ratio: float, threshold: float = 0.10) -> bool:
    """The stem may be cut only when enough red fills the finger gap."""
    return red_ratio >= threshold


def picking_validated(red_ratio: float, threshold: float = 0.15) -> bool:
    """After retreat, the fruit must still show between the fingers."""
    return red_ratio >= threshold


def inter_finger_region(intrinsics, half_width_px: int = 80,
                        v_top: int = 96, v_bottom: int = 256) -> BoundingBox:
    """Pixel window between the fingers in a close-range view.

    Centred horizontally; the vertical band covers where a correctly gripped
    berry hangs below the finger line.
    """
    cx = (intrinsics.width - 1) / 2.0
    return BoundingBox(cx - half_width_px, v_top, cx + half_width_px, v_bottom)


def stem_length_ok(residual_stem_m: Optional[float],
                   band: tuple = (0.005, 0.020)) -> bool:
    """Market quality check on the stem left above the berry."""
    if residual_stem_m is None:
        return False
    return band[0] <= residual_stem_m <= band[1]
