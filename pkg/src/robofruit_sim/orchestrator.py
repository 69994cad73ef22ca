"""Trial orchestration: the detect, approach, verify, cut, place loop.

One trial harvests one scene with one seed.  Every attempt walks the same
stage sequence the real head executes:

    detect -> schedule -> pre-grasp approach -> close-range association
    (with head adjustments) -> picking-point correction -> final approach ->
    cutting confirmation -> grip and cut -> retreat -> validation -> place

Failures are recorded against the stage that raised them.  The simulator can
run fully mechanistically (failures emerge from noise and geometry) or with
calibrated per-stage failure rates when the goal is to reproduce observed
field statistics.  Either way the whole trial is a deterministic function of
(scene, config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import gpr, perception, picking_head, scheduler
from .geometry import bbox_center
from .motion import (ForceParams, SegmentMode, Waypoint, WaypointLabel,
                     max_safe_acceleration, on_picking_side, plan_free, plan_lin,
                     punnet_slot_pose)
from .picking_head import (CaptureWindow, EffectorState, GripOutcome, HsvRanges,
                           inter_finger_region)
from .rig import DEFAULT_RIG, CameraRig
from .scene import Scene, VARIETIES, ground_truth_pluckable, without_berries
from .sensors import (Detection, DetectorConfig, SensorNoiseModel, estimate_radius,
                      filter_and_average_depth, observe_bottom, observe_top,
                      render_bottom_patch)


class Outcome(str, Enum):
    SUCCESS = "success"
    DETECTION_MISS = "detection_miss"
    CUT_COMMAND_FAILURE = "cut_command_failure"
    GRIP_CUT_FAILURE = "grip_cut_failure"
    VALIDATION_FAILURE = "validation_failure"
    POSITION_FAILURE = "position_failure"


FAILURE_OUTCOMES = (Outcome.CUT_COMMAND_FAILURE, Outcome.GRIP_CUT_FAILURE,
                    Outcome.VALIDATION_FAILURE, Outcome.POSITION_FAILURE)


@dataclass(frozen=True)
class TimeConstants:
    """Fixed stage latencies (seconds) charged on top of motion time."""

    detection_s: float = 4.5
    association_s: float = 0.8
    adjust_latency_s: float = 1.5
    correction_s: float = 0.4
    confirm_poll_s: float = 1.3
    separator_s: float = 2.2
    grip_cut_s: float = 5.2
    validation_s: float = 1.6
    place_release_s: float = 3.2
    settle_s: float = 1.3


@dataclass(frozen=True)
class CalibratedRates:
    """Per-attempt probabilities of each staged failure.

    The remainder is the per-attempt success probability.  Detection misses
    are not listed here; they belong to the detector configuration.
    """

    cut_command: float
    grip_cut: float
    validation: float
    position: float

    def __post_init__(self):
        total = self.cut_command + self.grip_cut + self.validation + self.position
        if total >= 1.0:
            raise ValueError("failure probabilities must sum below 1")

    @staticmethod
    def field_reference() -> "CalibratedRates":
        """Rates observed over the bundled 18-trial field dataset."""
        attempts = 201.0
        return CalibratedRates(cut_command=26.0 / attempts,
                               grip_cut=9.0 / attempts,
                               validation=6.0 / attempts,
                               position=17.0 / attempts)


@dataclass(frozen=True)
class TrialConfig:
    noise: SensorNoiseModel = field(default_factory=SensorNoiseModel)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    force: ForceParams = field(default_factory=ForceParams)
    window: CaptureWindow = field(default_factory=CaptureWindow)
    hsv: HsvRanges = field(default_factory=HsvRanges)
    time: TimeConstants = field(default_factory=TimeConstants)
    calibrated: Optional[CalibratedRates] = None

    policy: str = "coordinate"  # or "minmax"
    direction: scheduler.SortDirection = scheduler.SortDirection.LEFT_TO_RIGHT
    standoff_m: float = 0.15
    retries: int = 2
    adjust_retries: int = 3
    adjust_step_m: float = 0.03
    max_assoc_error_px: float = 60.0
    adjust_deadband_px: float = 20.0
    confirm_attempts: int = 3
    confirm_threshold: float = 0.10
    validate_threshold: float = 0.15
    retreat_m: float = 0.10
    pp_clearance_m: float = 0.015
    applied_grip_force_n: float = 9.0
    separation_success_prob: float = 0.95
    glare_episode_prob: float = 0.03
    glare_prob_high: float = 0.95
    lin_v: float = 0.2
    lin_a: float = 0.5
    free_v: float = 1.0
    free_a: float = 2.0
    punnet_auto_swap: bool = True
    position_failure_terminal: bool = True
    stem_band_m: tuple = (0.005, 0.020)
    table_margin_m: float = 0.005

    def __post_init__(self):
        if self.applied_grip_force_n > self.force.grip_limit_n:
            raise ValueError("configured grip force exceeds the grip limit")
        if self.retries < 0 or self.adjust_retries < 0:
            raise ValueError("retry budgets must be non-negative")
        if self.policy not in ("coordinate", "minmax"):
            raise ValueError(f"unknown scheduling policy {self.policy!r}")


@dataclass(frozen=True)
class SegmentRecord:
    tag: str
    mode: str
    profile: str
    length_m: float
    duration_s: float
    post_cut: bool
    a_max: float


@dataclass(frozen=True)
class AttemptRecord:
    berry_id: int
    attempt_index: int
    outcome: Outcome
    duration_s: float
    segments: tuple = ()
    confirm_polls: int = 0
    adjust_moves: int = 0
    separators_used: bool = False
    correction_applied: bool = False
    red_ratio_confirm: Optional[float] = None
    red_ratio_validate: Optional[float] = None
    residual_stem_m: Optional[float] = None
    stem_ok: Optional[bool] = None
    placed_slot: Optional[int] = None
    grip_outcome: Optional[str] = None
    target_pluckable_truth: bool = True


@dataclass(frozen=True)
class TrialLog:
    seed: int
    n_total: int
    n_pluckable: int
    n_detected: int
    n_success: int
    n_detection_miss: int
    n_cut_command: int
    n_grip_cut: int
    n_validation: int
    n_position: int
    n_attempts: int
    fp_attempts: int
    total_time_s: float
    punnets_used: int
    punnet_overflow: bool
    quality_warnings: int
    attempts: tuple = ()


class PunnetFull(RuntimeError):
    """Raised internally when all slots are taken and swapping is disabled."""


def time_model(segments: list, constants: TimeConstants, *, detection: bool,
               association: bool, adjust_moves: int, correction: bool,
               confirm_polls: int, separators: bool, gripped: bool,
               validated_stage: bool, placed: bool) -> float:
    """Total attempt duration: motion plus per-stage latencies."""
    t = sum(s.duration_s for s in segments) + constants.settle_s * len(segments)
    if detection:
        t += constants.detection_s
    if association:
        t += constants.association_s
    t += constants.adjust_latency_s * adjust_moves
    if correction:
        t += constants.correction_s
    t += constants.confirm_poll_s * confirm_polls
    if separators:
        t += constants.separator_s
    if gripped:
        t += constants.grip_cut_s
    if validated_stage:
        t += constants.validation_s
    if placed:
        t += constants.place_release_s
    return t


def approach_associate(scene: Scene, rig: CameraRig, config: TrialConfig,
                       flesh_est: np.ndarray, ee: np.ndarray, next_seed) -> tuple:
    """Associate the close-range views, nudging the head until two agree.

    This is the shared approach behaviour: teaching must collect corrector
    features through exactly the moves the trial will make, or the model
    sees a different feature distribution than it was fitted on.

    Returns:
        (assoc, ee, moves_done, hops): hops lists each (start, goal) nudge.
    """
    def once(at):
        cams = rig.bottom_cameras_at(at)
        boxes = observe_bottom(scene, cams, next_seed(),
                               px_jitter=config.detector.px_jitter,
                               head_plane_x=rig.camera_plane_x(at),
                               plane_margin=rig.head_plane_margin)
        return perception.associate_bottom(flesh_est, boxes, cams)

    assoc = once(ee)
    hops = []
    moves_done = 0
    while (not perception.visible_in_two(assoc, config.max_assoc_error_px)
           and moves_done < config.adjust_retries):
        moves = perception.propose_adjustment(assoc, config.max_assoc_error_px,
                                              config.adjust_deadband_px)
        delta = perception.adjustment_vector(moves, config.adjust_step_m)
        new_ee = ee + delta
        hops.append((ee, new_ee))
        ee = new_ee
        moves_done += 1
        assoc = once(ee)
    return assoc, ee, moves_done, hops


def _features_from_association(assoc: perception.TargetAssociation,
                               head_offset: np.ndarray) -> np.ndarray:
    """12 close-range box coordinates, right/middle/left order, then the
    head's net displacement from its nominal pre-grasp pose.

    A view without a match contributes a zero-size pseudo-box at the
    projected target (or the image centre when even the projection is
    unavailable), which keeps the feature layout fixed.  The displacement
    is needed because adjustment moves change what the boxes mean: the
    same berry offset reads differently after the head has stepped.
    """
    feats = []
    for view in assoc.views:
        if view.box is not None:
            feats.extend([view.box.xp1, view.box.yp1, view.box.xp2, view.box.yp2])
        else:
            p = view.projection if view.projection is not None else view.image_center
            feats.extend([p.u, p.v, p.u, p.v])
    feats.extend(np.asarray(head_offset, dtype=float).ravel())
    return np.asarray(feats, dtype=float)


class _Trial:
    """Mutable state for one run_trial call."""

    def __init__(self, scene: Scene, config: TrialConfig, seed: int,
                 correction: Optional[gpr.GprModel], rig: CameraRig):
        self.scene = scene
        self.config = config
        self.seed = seed
        self.model = correction
        self.rig = rig
        self.rng_ctl = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        self._seed_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.effector = EffectorState.initial()
        self.removed: set = set()
        self.attempt_counts: dict = {}
        self.done: set = set()
        self.detected_ever: set = set()
        self.records: list = []
        self.occupancy: list = [None] * 6
        self.punnets_used = 1
        self.punnet_overflow = False
        self.home = rig.home()

    def next_seed(self) -> int:
        return int(self._seed_rng.integers(0, 2 ** 63 - 1))

    def visible_scene(self) -> Scene:
        return without_berries(self.scene, self.removed) if self.removed else self.scene

    # -- stages ------------------------------------------------------------

    def detect(self) -> list:
        cam = self.rig.top_camera_at(self.home)
        return observe_top(self.visible_scene(), cam, self.config.noise,
                           self.config.detector, self.next_seed(),
                           miss_seed=self.seed)

    def eligible(self, dets: list) -> list:
        cfg = self.config
        out = []
        for det in dets:
            bid = det.berry_id_truth
            if not det.predicted_pluckable or bid in self.done or bid in self.removed:
                continue
            if self.attempt_counts.get(bid, 0) > cfg.retries:
                continue
            out.append(det)
        return out

    def select(self, dets: list) -> Detection:
        centers = [bbox_center(d.bbox) for d in dets]
        if self.config.policy == "minmax":
            return dets[scheduler.min_max_target(centers)]
        order = scheduler.sort_by_coordinate(centers, self.config.direction)
        return dets[order[0]]

    def attempt(self, det: Detection) -> AttemptRecord:
        cfg = self.config
        rig = self.rig
        berry = self.scene.berry_by_id(det.berry_id_truth)
        truth_pluckable = ground_truth_pluckable(berry, cfg.detector.ripeness_threshold)
        idx = self.attempt_counts.get(berry.id, 0) + 1
        self.attempt_counts[berry.id] = idx

        # In calibrated mode the attempt outcome is drawn up front and each
        # stage is forced to comply; a None draw means forced success.
        forced = None
        if cfg.calibrated is not None:
            forced = self._draw_calibrated() or Outcome.SUCCESS

        segments: list = []
        top_cam = rig.top_camera_at(self.home)
        depth_avg = filter_and_average_depth(det.depth, cfg.detector.dropout_below,
                                             cfg.detector.dropout_above)
        flesh_est = perception.localize_target(det, top_cam,
                                               cfg.detector.dropout_below,
                                               cfg.detector.dropout_above)
        r_est = estimate_radius(det, top_cam, depth_avg)
        pp_est = flesh_est + np.array([0.0, 0.0, r_est + cfg.pp_clearance_m])

        ee = self.home.copy()
        pregrasp = pp_est - np.array([cfg.standoff_m, 0.0, 0.0])
        segments.append(self._segment(ee, pregrasp, SegmentMode.FREE, "approach",
                                      False, WaypointLabel.PRE_GRASP))
        ee = pregrasp

        assoc, adjust_moves, ee = self._associate_with_adjustment(ee, flesh_est, segments) \
            if forced is None else (self._associate_once(ee, flesh_est), 0, ee)

        def finish(outcome, **kw):
            return self._finish_attempt(berry, idx, outcome, segments, ee,
                                        truth_pluckable, adjust_moves, **kw)

        if forced is None and not perception.visible_in_two(assoc, cfg.max_assoc_error_px):
            return finish(Outcome.POSITION_FAILURE, association=True)
        if forced is Outcome.POSITION_FAILURE:
            return finish(Outcome.POSITION_FAILURE, association=True)

        correction_applied = False
        pp_cmd = pp_est
        if self.model is not None:
            feats = _features_from_association(assoc, ee - pregrasp)
            pp_cmd = gpr.correct_picking_point(pp_est, self.model, feats)
            correction_applied = True
        # The controller clamps commands at its workspace limit; the grasp
        # only cares about lateral and vertical alignment, so an estimate
        # past the table plane still seats the stem in the jaws.
        pp_cmd = pp_cmd.copy()
        pp_cmd[0] = min(pp_cmd[0], self.scene.table_plane_x - cfg.table_margin_m)

        segments.append(self._segment(ee, pp_cmd, SegmentMode.LIN, "pick", False,
                                      WaypointLabel.PICK))
        ee = pp_cmd

        occl_now = set(berry.occluder_ids) - self.removed
        separators_used = False
        if occl_now:
            self.effector, displaced = picking_head.open_separators(
                self.effector, berry, ee, occl_now,
                cfg.separation_success_prob, self.rng_ctl)
            separators_used = True
            occl_now -= displaced

        polls, ratio, confirmed = self._confirm(ee, berry, forced)
        if not confirmed:
            self._maybe_close_separators()
            return finish(Outcome.CUT_COMMAND_FAILURE, association=True,
                          correction=correction_applied, confirm_polls=polls,
                          red_confirm=ratio, separators=separators_used)

        grip_outcome, residual = self._grip(berry, pp_cmd, occl_now, forced)
        self._maybe_close_separators()
        if grip_outcome is GripOutcome.MISSED:
            self.effector = picking_head.release(self.effector)
            return finish(Outcome.POSITION_FAILURE, association=True,
                          correction=correction_applied, confirm_polls=polls,
                          red_confirm=ratio, separators=separators_used,
                          gripped=True, grip_outcome=grip_outcome)
        if grip_outcome is GripOutcome.PARTIAL_CUT:
            self.effector = picking_head.release(self.effector)
            return finish(Outcome.GRIP_CUT_FAILURE, association=True,
                          correction=correction_applied, confirm_polls=polls,
                          red_confirm=ratio, separators=separators_used,
                          gripped=True, grip_outcome=grip_outcome)

        # Anything from here on moves a cut berry, so acceleration is capped
        # by what the grip force can hold.
        a_cap = max_safe_acceleration(cfg.force, cfg.force.grip_limit_n)
        retreat = ee - np.array([cfg.retreat_m, 0.0, 0.0])
        segments.append(self._segment(ee, retreat, SegmentMode.LIN, "retreat", True,
                                      WaypointLabel.RETREAT,
                                      v=cfg.lin_v, a=min(cfg.lin_a, a_cap)))
        ee = retreat

        val_ratio, validated = self._validate(ee, berry, residual, forced)
        if not validated:
            self.effector = picking_head.release(self.effector)
            self.removed.add(berry.id)
            self.done.add(berry.id)
            return finish(Outcome.VALIDATION_FAILURE, association=True,
                          correction=correction_applied, confirm_polls=polls,
                          red_confirm=ratio, separators=separators_used,
                          gripped=True, validated_stage=True,
                          grip_outcome=grip_outcome, red_validate=val_ratio,
                          residual=residual)

        slot = self._free_slot()
        if slot is None:
            self.effector = picking_head.release(self.effector)
            self.removed.add(berry.id)
            self.done.add(berry.id)
            raise PunnetFull()
        slot_wp = punnet_slot_pose(self.scene.punnet, slot, self.occupancy)
        segments.append(self._segment(ee, slot_wp.position, SegmentMode.FREE,
                                      "to_punnet", True, WaypointLabel.PUNNET,
                                      v=cfg.free_v, a=min(cfg.free_a, a_cap)))
        ee = slot_wp.position
        self.occupancy[slot] = berry.id
        self.effector = picking_head.release(self.effector)
        self.removed.add(berry.id)
        self.done.add(berry.id)
        return finish(Outcome.SUCCESS, association=True,
                      correction=correction_applied, confirm_polls=polls,
                      red_confirm=ratio, separators=separators_used, gripped=True,
                      validated_stage=True, grip_outcome=grip_outcome,
                      red_validate=val_ratio, residual=residual, placed_slot=slot,
                      ee_override=ee)

    # -- helpers -----------------------------------------------------------

    def _draw_calibrated(self) -> Optional[Outcome]:
        r = self.config.calibrated
        u = self.rng_ctl.random()
        edges = [(r.cut_command, Outcome.CUT_COMMAND_FAILURE),
                 (r.grip_cut, Outcome.GRIP_CUT_FAILURE),
                 (r.validation, Outcome.VALIDATION_FAILURE),
                 (r.position, Outcome.POSITION_FAILURE)]
        acc = 0.0
        for p, outcome in edges:
            acc += p
            if u < acc:
                return outcome
        return None  # success

    def _segment(self, start, goal, mode, tag, post_cut, label,
                 v: Optional[float] = None, a: Optional[float] = None) -> SegmentRecord:
        cfg = self.config
        if mode is SegmentMode.LIN:
            v = cfg.lin_v if v is None else v
            a = cfg.lin_a if a is None else a
            plan = plan_lin(Waypoint(start), Waypoint(goal, label=label), v, a)
        else:
            v = cfg.free_v if v is None else v
            a = cfg.free_a if a is None else a
            plan = plan_free(Waypoint(start), Waypoint(goal, label=label), v, a)
        for pos in (start, goal):
            if not on_picking_side(pos, self.scene.table_plane_x):
                raise ValueError("planned waypoint crosses the table plane")
        return SegmentRecord(tag=tag, mode=plan.mode.value, profile=plan.profile.value,
                             length_m=plan.length, duration_s=plan.duration_s,
                             post_cut=post_cut, a_max=a)

    def _associate_once(self, ee, flesh_est):
        cams = self.rig.bottom_cameras_at(ee)
        boxes = observe_bottom(self.visible_scene(), cams, self.next_seed(),
                               px_jitter=self.config.detector.px_jitter,
                               head_plane_x=self.rig.camera_plane_x(ee),
                               plane_margin=self.rig.head_plane_margin)
        return perception.associate_bottom(flesh_est, boxes, cams)

    def _associate_with_adjustment(self, ee, flesh_est, segments):
        assoc, ee, moves_done, hops = approach_associate(
            self.visible_scene(), self.rig, self.config, flesh_est, ee,
            self.next_seed)
        for start, goal in hops:
            segments.append(self._segment(start, goal, SegmentMode.LIN, "adjust",
                                          False, WaypointLabel.ADJUST))
        return assoc, moves_done, ee

    def _confirm(self, ee, berry, forced) -> tuple:
        cfg = self.config
        if forced is not None:
            if forced is Outcome.CUT_COMMAND_FAILURE:
                return cfg.confirm_attempts, None, False
            return 1, None, True
        cams = self.rig.bottom_cameras_at(ee)
        middle = cams[1]
        region = inter_finger_region(middle.intrinsics)
        polls = 0
        ratio = None
        for _ in range(cfg.confirm_attempts):
            polls += 1
            glare = (cfg.glare_prob_high
                     if self.rng_ctl.random() < cfg.glare_episode_prob else 0.0)
            patch = render_bottom_patch(self.visible_scene(), middle, region,
                                        self.next_seed(), glare_prob=glare,
                                        far_cutoff=self.rig.close_range_cutoff,
                                        head_plane_x=self.rig.camera_plane_x(ee),
                                        plane_margin=self.rig.head_plane_margin)
            ratio = picking_head.red_mask_ratio(patch, ranges=cfg.hsv)
            if picking_head.cutting_confirmed(ratio, cfg.confirm_threshold):
                return polls, ratio, True
        return polls, ratio, False

    def _grip(self, berry, pp_cmd, occl_now, forced):
        cfg = self.config
        if forced is not None:
            if forced is Outcome.GRIP_CUT_FAILURE:
                self.effector = replace(self.effector,
                                        gripper=picking_head.GripperState.GRIPPING,
                                        cutter=picking_head.CutterState.FIRED)
                return GripOutcome.PARTIAL_CUT, None
            # forced success or validation failure both need a completed cut
            self.effector = replace(self.effector,
                                    gripper=picking_head.GripperState.GRIPPING,
                                    cutter=picking_head.CutterState.FIRED,
                                    held_berry_id=berry.id,
                                    applied_grip_force_n=cfg.applied_grip_force_n)
            residual = max(0.0, float(pp_cmd[2] + self.rng_ctl.normal(0.0, 0.001)
                                      - berry.key_points.top[2]))
            return GripOutcome.SUCCESS, residual
        self.effector, outcome, residual = picking_head.grip_and_cut(
            self.effector, berry, pp_cmd, VARIETIES[self.scene.variety],
            cfg.window, cfg.force, self.rng_ctl, occl_now,
            cfg.applied_grip_force_n)
        return outcome, residual

    def _validate(self, ee, berry, residual, forced) -> tuple:
        cfg = self.config
        if forced is not None:
            return None, forced is not Outcome.VALIDATION_FAILURE
        cams = self.rig.bottom_cameras_at(ee)
        middle = cams[1]
        region = inter_finger_region(middle.intrinsics)
        held_center = ee - np.array([0.0, 0.0, (residual or 0.0) + berry.radius])
        scene_wo_target = without_berries(self.visible_scene(), {berry.id})
        glare = (cfg.glare_prob_high
                 if self.rng_ctl.random() < cfg.glare_episode_prob else 0.0)
        patch = render_bottom_patch(scene_wo_target, middle, region,
                                    self.next_seed(), glare_prob=glare,
                                    far_cutoff=self.rig.close_range_cutoff,
                                    held=(held_center, berry.radius, berry),
                                    head_plane_x=self.rig.camera_plane_x(ee),
                                    plane_margin=self.rig.head_plane_margin)
        ratio = picking_head.red_mask_ratio(patch, ranges=cfg.hsv)
        return ratio, picking_head.picking_validated(ratio, cfg.validate_threshold)

    def _maybe_close_separators(self):
        if self.effector.separators is picking_head.SeparatorState.OPEN:
            self.effector = picking_head.close_separators(self.effector)

    def _free_slot(self) -> Optional[int]:
        for k, v in enumerate(self.occupancy):
            if v is None:
                return k
        if self.config.punnet_auto_swap:
            self.occupancy = [None] * 6
            self.punnets_used += 1
            return 0
        return None

    def _finish_attempt(self, berry, idx, outcome, segments, ee, truth_pluckable,
                        adjust_moves, association=False, correction=False,
                        confirm_polls=0, separators=False, gripped=False,
                        validated_stage=False, grip_outcome=None, red_confirm=None,
                        red_validate=None, residual=None, placed_slot=None,
                        ee_override=None) -> AttemptRecord:
        cfg = self.config
        if ee_override is not None:
            ee = ee_override
        segments.append(self._segment(ee, self.home, SegmentMode.FREE, "to_home",
                                      False, WaypointLabel.HOME))
        placed = placed_slot is not None
        duration = time_model(segments, cfg.time, detection=True, association=association,
                              adjust_moves=adjust_moves, correction=correction,
                              confirm_polls=confirm_polls, separators=separators,
                              gripped=gripped, validated_stage=validated_stage,
                              placed=placed)
        stem_ok = None
        if residual is not None:
            stem_ok = picking_head.stem_length_ok(residual, cfg.stem_band_m)
        if outcome is Outcome.POSITION_FAILURE and cfg.position_failure_terminal:
            self.done.add(berry.id)
        return AttemptRecord(
            berry_id=berry.id, attempt_index=idx, outcome=outcome,
            duration_s=duration, segments=tuple(segments),
            confirm_polls=confirm_polls, adjust_moves=adjust_moves,
            separators_used=separators, correction_applied=correction,
            red_ratio_confirm=red_confirm, red_ratio_validate=red_validate,
            residual_stem_m=residual, stem_ok=stem_ok, placed_slot=placed_slot,
            grip_outcome=grip_outcome.value if grip_outcome else None,
            target_pluckable_truth=truth_pluckable)


def run_trial(scene: Scene, config: TrialConfig, seed: int,
              correction: Optional[gpr.GprModel] = None,
              rig: CameraRig = DEFAULT_RIG) -> TrialLog:
    """Harvest one scene deterministically.

    Returns a log whose counters satisfy the bookkeeping identities:
    successes plus itemised failures equals executed attempts (on truly
    pluckable fruit), every pluckable berry never detected contributes one
    detection-miss record, and per-berry attempts never exceed retries + 1.
    """
    trial = _Trial(scene, config, seed, correction, rig)
    pluckable_ids = {b.id for b in scene.berries
                     if ground_truth_pluckable(b, config.detector.ripeness_threshold)}

    max_rounds = len(scene.berries) * (config.retries + 1) + 2
    overflow = False
    for _ in range(max_rounds):
        dets = trial.detect()
        for det in dets:
            if det.predicted_pluckable and det.berry_id_truth in pluckable_ids:
                trial.detected_ever.add(det.berry_id_truth)
        elig = trial.eligible(dets)
        if not elig:
            break
        det = trial.select(elig)
        try:
            trial.records.append(trial.attempt(det))
        except PunnetFull:
            overflow = True
            break

    for bid in sorted(pluckable_ids - trial.detected_ever):
        trial.records.append(AttemptRecord(berry_id=bid, attempt_index=0,
                                           outcome=Outcome.DETECTION_MISS,
                                           duration_s=0.0,
                                           target_pluckable_truth=True))

    records = tuple(trial.records)
    # A never-detected pluckable counts as one (virtual) attempt, matching
    # field bookkeeping where successes plus itemised failures equal the
    # attempt count.
    on_pluckable = [r for r in records if r.target_pluckable_truth]
    count = lambda o: sum(1 for r in on_pluckable if r.outcome is o)
    quality = sum(1 for r in records
                  if r.outcome is Outcome.SUCCESS and r.stem_ok is False)
    return TrialLog(
        seed=seed,
        n_total=len(scene.berries),
        n_pluckable=len(pluckable_ids),
        n_detected=len(trial.detected_ever),
        n_success=count(Outcome.SUCCESS),
        n_detection_miss=count(Outcome.DETECTION_MISS),
        n_cut_command=count(Outcome.CUT_COMMAND_FAILURE),
        n_grip_cut=count(Outcome.GRIP_CUT_FAILURE),
        n_validation=count(Outcome.VALIDATION_FAILURE),
        n_position=count(Outcome.POSITION_FAILURE),
        n_attempts=len(on_pluckable),
        fp_attempts=sum(1 for r in records if not r.target_pluckable_truth),
        total_time_s=sum(r.duration_s for r in records),
        punnets_used=trial.punnets_used,
        punnet_overflow=overflow,
        quality_warnings=quality,
        attempts=records,
    )


# --- serialisation ----------------------------------------------------------


def trial_log_to_dict(log: TrialLog) -> dict:
    doc = {k: getattr(log, k) for k in (
        "seed", "n_total", "n_pluckable", "n_detected", "n_success",
        "n_detection_miss", "n_cut_command", "n_grip_cut", "n_validation",
        "n_position", "n_attempts", "fp_attempts", "total_time_s",
        "punnets_used", "punnet_overflow", "quality_warnings")}
    doc["attempts"] = [
        {
            "berry_id": a.berry_id,
            "attempt_index": a.attempt_index,
            "outcome": a.outcome.value,
            "duration_s": a.duration_s,
            "confirm_polls": a.confirm_polls,
            "adjust_moves": a.adjust_moves,
            "separators_used": a.separators_used,
            "correction_applied": a.correction_applied,
            "red_ratio_confirm": a.red_ratio_confirm,
            "red_ratio_validate": a.red_ratio_validate,
            "residual_stem_m": a.residual_stem_m,
            "stem_ok": a.stem_ok,
            "placed_slot": a.placed_slot,
            "grip_outcome": a.grip_outcome,
            "target_pluckable_truth": a.target_pluckable_truth,
            "segments": [
                {"tag": s.tag, "mode": s.mode, "profile": s.profile,
                 "length_m": s.length_m, "duration_s": s.duration_s,
                 "post_cut": s.post_cut, "a_max": s.a_max}
                for s in a.segments
            ],
        }
        for a in log.attempts
    ]
    return doc


def trial_log_to_json(log: TrialLog) -> str:
    return json.dumps(trial_log_to_dict(log), sort_keys=True, separators=(",", ":"))


def trial_log_from_json(text: str) -> TrialLog:
    doc = json.loads(text)
    attempts = tuple(
        AttemptRecord(
            berry_id=a["berry_id"], attempt_index=a["attempt_index"],
            outcome=Outcome(a["outcome"]), duration_s=a["duration_s"],
            segments=tuple(SegmentRecord(**s) for s in a["segments"]),
            confirm_polls=a["confirm_polls"], adjust_moves=a["adjust_moves"],
            separators_used=a["separators_used"],
            correction_applied=a["correction_applied"],
            red_ratio_confirm=a["red_ratio_confirm"],
            red_ratio_validate=a["red_ratio_validate"],
            residual_stem_m=a["residual_stem_m"], stem_ok=a["stem_ok"],
            placed_slot=a["placed_slot"], grip_outcome=a["grip_outcome"],
            target_pluckable_truth=a["target_pluckable_truth"])
        for a in doc["attempts"]
    )
    kwargs = {k: doc[k] for k in (
        "seed", "n_total", "n_pluckable", "n_detected", "n_success",
        "n_detection_miss", "n_cut_command", "n_grip_cut", "n_validation",
        "n_position", "n_attempts", "fp_attempts", "total_time_s",
        "punnets_used", "punnet_overflow", "quality_warnings")}
    return TrialLog(attempts=attempts, **kwargs)
