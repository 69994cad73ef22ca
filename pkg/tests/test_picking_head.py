import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robofruit_sim.geometry import BoundingBox, Intrinsics, Pixel
from robofruit_sim.motion import ForceParams
from robofruit_sim.picking_head import (
    CaptureWindow,
    CutterState,
    EffectorState,
    GripOutcome,
    GripperState,
    HsvRange,
    HsvRanges,
    IllegalStateTransition,
    SeparatorState,
    close_separators,
    cutting_confirmed,
    grip_and_cut,
    inter_finger_region,
    open_separators,
    picking_validated,
    red_mask_ratio,
    rgb_to_hsv,
    stem_length_ok,
)
from robofruit_sim.sensors import ColorPatch

from conftest import make_berry, katrina


def _patch(rgb):
    return ColorPatch(rgb=np.asarray(rgb, dtype=np.uint8), origin=Pixel(0.0, 0.0))


def _fresh_state():
    return EffectorState(separators=SeparatorState.CLOSED,
                         gripper=GripperState.OPEN,
                         cutter=CutterState.IDLE,
                         held_berry_id=None,
                         applied_grip_force_n=0.0)


# ---------------------------------------------------------------- colour


def test_hsv_frozen_primaries():
    assert rgb_to_hsv(255, 0, 0) == (0, 255, 255)
    assert rgb_to_hsv(0, 255, 0) == (60, 255, 255)
    assert rgb_to_hsv(0, 0, 255) == (120, 255, 255)
    assert rgb_to_hsv(0, 0, 0) == (0, 0, 0)
    assert rgb_to_hsv(255, 255, 255) == (0, 0, 255)
    assert rgb_to_hsv(128, 128, 128) == (0, 0, 128)


def test_hsv_rejects_out_of_range_channels():
    with pytest.raises(ValueError):
        rgb_to_hsv(256, 0, 0)
    with pytest.raises(ValueError):
        rgb_to_hsv(0, -1, 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_hsv_against_independent_integer_oracle(r, g, b):
    """Pure-integer hexcone reference built from first principles."""
    h, s, v = rgb_to_hsv(r, g, b)
    mx, mn = max(r, g, b), min(r, g, b)
    assert v == mx
    if mx == 0:
        assert s == 0
    else:
        # round-half-up of 255 * chroma / value
        assert s == (2 * 255 * (mx - mn) + mx) // (2 * mx)
    assert 0 <= h <= 179
    if mx == mn:
        assert h == 0


def test_red_bands_cover_red_and_exclude_other_colours():
    ranges = HsvRanges()
    assert ranges.is_red(*rgb_to_hsv(255, 0, 0))
    assert ranges.is_red(*rgb_to_hsv(200, 20, 30))
    # Crimson sits on the high side of the hue wheel.
    assert ranges.is_red(*rgb_to_hsv(220, 20, 60))
    assert not ranges.is_red(*rgb_to_hsv(0, 255, 0))
    assert not ranges.is_red(*rgb_to_hsv(0, 0, 255))
    assert not ranges.is_red(*rgb_to_hsv(255, 255, 255))
    assert not ranges.is_red(*rgb_to_hsv(0, 0, 0))


def test_mask_ratio_simple_halves():
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[0, 1] = (210, 30, 40)
    rgb[1, 0] = (0, 255, 0)
    rgb[1, 1] = (255, 255, 255)
    assert red_mask_ratio(_patch(rgb)) == pytest.approx(0.5)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mask_ratio_equals_per_pixel_counting(seed):
    rng = np.random.default_rng(seed)
    h, w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
    rgb = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    ranges = HsvRanges()
    hits = sum(ranges.is_red(*rgb_to_hsv(*map(int, rgb[i, j])))
               for i in range(h) for j in range(w))
    assert red_mask_ratio(_patch(rgb)) == hits / (h * w)


def test_mask_ratio_region_crop():
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[:2, :2] = (255, 0, 0)   # only the top-left quadrant is red
    assert red_mask_ratio(_patch(rgb)) == pytest.approx(0.25)
    region = BoundingBox(0, 0, 1, 1)
    assert red_mask_ratio(_patch(rgb), region=region) == 1.0
    with pytest.raises(ValueError):
        red_mask_ratio(_patch(rgb), region=BoundingBox(0, 0, 4, 4))


def test_mask_ratio_custom_ranges():
    rgb = np.zeros((1, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (0, 255, 0)
    green_only = HsvRanges(low=HsvRange((55, 100, 20), (65, 255, 255)),
                           high=HsvRange((55, 100, 20), (65, 255, 255)))
    assert red_mask_ratio(_patch(rgb), ranges=green_only) == pytest.approx(0.5)


def test_inter_finger_region_centered_between_fingers():
    intr = Intrinsics(fx=200.0, fy=200.0, cx=320.0, cy=240.0, width=640, height=480)
    box = inter_finger_region(intr, half_width_px=80, v_top=96, v_bottom=256)
    # Centred on the middle pixel column (width - 1) / 2 = 319.5.
    assert (box.xp1, box.xp2) == (239.5, 399.5)
    assert (box.yp1, box.yp2) == (96.0, 256.0)
    assert box.width == 160.0


# ------------------------------------------------------------ thresholds


def test_confirmation_and_validation_thresholds():
    assert cutting_confirmed(0.10)
    assert not cutting_confirmed(0.0999)
    assert picking_validated(0.15)
    assert not picking_validated(0.1499)
    assert cutting_confirmed(0.05, threshold=0.05)


def test_stem_length_band():
    assert stem_length_ok(0.005)
    assert stem_length_ok(0.02)
    assert not stem_length_ok(0.0049)
    assert not stem_length_ok(0.0201)
    assert not stem_length_ok(None)


# ---------------------------------------------------------- state machine


def test_separator_transitions():
    rng = np.random.default_rng(0)
    berry = make_berry((0.4, 0.0, 0.33))
    state = _fresh_state()
    opened, displaced = open_separators(state, berry,
                                        berry.key_points.pp + [0.0, 0.0, 0.05],
                                        {7, 9}, success_prob=1.0, rng=rng)
    assert opened.separators is SeparatorState.OPEN
    assert displaced == {7, 9}
    with pytest.raises(IllegalStateTransition):
        open_separators(opened, berry, berry.key_points.pp, set(), 1.0, rng)
    closed = close_separators(opened)
    assert closed.separators is SeparatorState.CLOSED
    with pytest.raises(IllegalStateTransition):
        close_separators(closed)


def test_separators_sweep_air_when_too_far():
    rng = np.random.default_rng(0)
    berry = make_berry((0.4, 0.0, 0.33))
    far_ee = berry.key_points.pp + np.array([0.0, 0.5, 0.0])
    opened, displaced = open_separators(_fresh_state(), berry, far_ee,
                                        {1, 2, 3}, success_prob=1.0, rng=rng)
    assert opened.separators is SeparatorState.OPEN
    assert displaced == set()


def _grip(berry, commanded, occluders=frozenset(), force_n=9.0,
          force=ForceParams(), window=CaptureWindow()):
    return grip_and_cut(_fresh_state(), berry, np.asarray(commanded, float),
                        katrina(), window, force,
                        np.random.default_rng(0), set(occluders), force_n)


def test_grip_and_cut_success_inside_window():
    berry = make_berry((0.4, 0.0, 0.33))
    state, outcome, residual = _grip(berry, berry.key_points.pp)
    assert outcome is GripOutcome.SUCCESS
    assert state.gripper is GripperState.GRIPPING
    assert state.cutter is CutterState.FIRED
    assert state.held_berry_id == berry.id
    assert residual is not None and residual >= 0.0


def test_grip_and_cut_misses_outside_window():
    berry = make_berry((0.4, 0.0, 0.33))
    wide = berry.key_points.pp + np.array([0.0, 0.015, 0.0])
    state, outcome, residual = _grip(berry, wide)
    assert outcome is GripOutcome.MISSED
    assert state.held_berry_id is None
    assert residual is None


def test_grip_and_cut_blocked_by_occluder():
    berry = make_berry((0.4, 0.0, 0.33))
    _, outcome, _ = _grip(berry, berry.key_points.pp, occluders={3})
    assert outcome is GripOutcome.MISSED


def test_grip_and_cut_partial_on_thick_stem():
    # Cut force scales with diameter squared; a stem far above the variety
    # mean exceeds the blade capability.
    berry = make_berry((0.4, 0.0, 0.33), stem_diameter_mm=10.0)
    _, outcome, _ = _grip(berry, berry.key_points.pp)
    assert outcome is GripOutcome.PARTIAL_CUT


def test_grip_force_above_limit_rejected():
    berry = make_berry((0.4, 0.0, 0.33))
    with pytest.raises(ValueError):
        _grip(berry, berry.key_points.pp, force_n=10.5)


def test_grip_requires_open_gripper_and_idle_cutter():
    berry = make_berry((0.4, 0.0, 0.33))
    held, _, _ = _grip(berry, berry.key_points.pp)
    with pytest.raises(IllegalStateTransition):
        grip_and_cut(held, berry, berry.key_points.pp, katrina(),
                     CaptureWindow(), ForceParams(),
                     np.random.default_rng(0), set(), 9.0)


def test_release_rearms_and_drops():
    from robofruit_sim.picking_head import release
    berry = make_berry((0.4, 0.0, 0.33))
    held, outcome, _ = _grip(berry, berry.key_points.pp)
    assert outcome is GripOutcome.SUCCESS
    dropped = release(held)
    assert dropped.gripper is GripperState.OPEN
    assert dropped.cutter is CutterState.IDLE
    assert dropped.held_berry_id is None
