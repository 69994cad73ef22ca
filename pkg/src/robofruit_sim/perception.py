"""Target localisation, multi-view association, and approach adjustment.

The overview camera yields a coarse 3D estimate of the chosen berry.  During
the approach the three close-range cameras each report detection boxes; the
estimate is projected into every view and matched to the nearest box.  When
fewer than two views agree, the head is nudged until they do.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .geometry import (BoundingBox, CameraModel, NonPositiveDepth, Pixel,
                       bbox_center, pixel_depth_to_base, project_to_pixel)
from .sensors import Detection, filter_and_average_depth


def localize_target(det: Detection, camera: CameraModel,
                    near: float = 0.20, far: float = 0.50) -> np.ndarray:
    """Reconstruct a berry position from one overview detection.

    Depth samples are band-filtered and averaged, the box centre is
    back-projected at that depth, and the observation's per-axis error is
    applied.  With noise-free input this returns the true flesh centre.

    Raises:
        ValueError: when the depth filter empties the sample set.
    """
    depth = filter_and_average_depth(det.depth, near, far)
    base = pixel_depth_to_base(camera, bbox_center(det.bbox), depth)
    return base + np.asarray(det.depth.per_axis_error, dtype=float)


@dataclass(frozen=True)
class ViewMatch:
    """Association outcome for one close-range camera."""

    projection: Optional[Pixel]
    box: Optional[BoundingBox]
    box_index: Optional[int]
    error_px: Optional[float]
    image_center: Pixel


@dataclass(frozen=True)
class TargetAssociation:
    """Per-camera matches for one target, cameras in the given order."""

    views: tuple

    def matched_count(self, max_error_px: float) -> int:
        return sum(1 for v in self.views
                   if v.error_px is not None and v.error_px <= max_error_px)


def _unmatched(view: ViewMatch) -> ViewMatch:
    return ViewMatch(view.projection, None, None, None, view.image_center)


def _pair_depth(cam_i: CameraModel, cam_j: CameraModel,
                u_i: float, u_j: float) -> Optional[float]:
    """Depth implied by the horizontal disparity of one point seen in two
    cameras that share an orientation.  None when the disparity carries no
    depth (zero baseline along the image x axis or a non-positive result)."""
    R = cam_i.base_from_camera.rotation
    t_i = cam_i.base_from_camera.translation
    t_j = cam_j.base_from_camera.translation
    baseline_x = float((R.T @ (t_j - t_i))[0])
    du = u_i - u_j
    if abs(baseline_x) < 1e-12 or abs(du) < 1e-9:
        return None
    z = cam_i.intrinsics.fx * baseline_x / du
    return z if z > 0 else None


def _consistent_views(views: list, cameras: list[CameraModel],
                      target_base: np.ndarray, v_tol_px: float,
                      pair_depth_tol_m: float,
                      pred_depth_tol_m: float) -> list:
    """Demote matched views whose boxes cannot be one physical berry.

    The cameras share an orientation, so one berry lands on the same image
    row everywhere (up to box jitter) and each camera pair implies the same
    depth from its disparity.  A nearest-box match that breaks either rule
    has grabbed a neighbouring berry, and feeding it onward would point the
    corrector at the wrong fruit.
    """
    matched = [i for i, v in enumerate(views) if v.box is not None]
    if len(matched) < 2:
        return views

    # Row agreement: drop matches off the shared image row.
    centers = {i: bbox_center(views[i].box) for i in matched}
    med_v = float(np.median([centers[i].v for i in matched]))
    if len(matched) == 2:
        a, b = matched
        if abs(centers[a].v - centers[b].v) > 2 * v_tol_px:
            worse = a if views[a].error_px >= views[b].error_px else b
            views[worse] = _unmatched(views[worse])
            matched.remove(worse)
    else:
        for i in sorted(matched, key=lambda i: -abs(centers[i].v - med_v)):
            if abs(centers[i].v - med_v) > v_tol_px and len(matched) > 2:
                views[i] = _unmatched(views[i])
                matched.remove(i)

    # Depth agreement: every camera pair must imply one depth.
    def implied(i, j):
        return _pair_depth(cameras[i], cameras[j], centers[i].u, centers[j].u)

    if len(matched) == 3:
        pairs = [(i, j) for i in matched for j in matched if i < j]
        depths = {p: implied(*p) for p in pairs}
        if any(d is None for d in depths.values()) or \
                max(depths.values()) - min(depths.values()) > pair_depth_tol_m:
            # one view is the intruder: the one whose pairs disagree most
            def discord(i):
                vals = [depths[p] for p in pairs if i in p]
                if any(v is None for v in vals):
                    return float("inf")
                return float(np.sum(np.abs(np.diff(sorted(vals)))))
            worst = max(matched, key=lambda i: (discord(i), views[i].error_px))
            views[worst] = _unmatched(views[worst])
            matched.remove(worst)

    if len(matched) == 2:
        a, b = matched
        z = implied(a, b)
        cam = cameras[a]
        z_pred = float(cam.base_from_camera.inverse_apply(
            np.asarray(target_base, dtype=float))[2])
        if z is None or abs(z - z_pred) > pred_depth_tol_m:
            worse = a if views[a].error_px >= views[b].error_px else b
            views[worse] = _unmatched(views[worse])
    return views


def associate_bottom(target_base: np.ndarray, boxes_per_camera: list[list[BoundingBox]],
                     cameras: list[CameraModel], v_tol_px: float = 12.0,
                     pair_depth_tol_m: float = 0.05,
                     pred_depth_tol_m: float = 0.12) -> TargetAssociation:
    """Match the target estimate to the nearest box in each close-range view.

    The match minimises the pixel distance between the projected target and
    each box centre, then cross-view consistency demotes matches that cannot
    be the same berry (off the shared image row, or implying disagreeing
    depths).  A view gets no match when it has no boxes or the target sits at
    or behind its camera plane; the projection is kept even when it falls
    outside the sensor, since the nearest box is still informative.
    """
    views = []
    for camera, boxes in zip(cameras, boxes_per_camera):
        intr = camera.intrinsics
        center = Pixel((intr.width - 1) / 2.0, (intr.height - 1) / 2.0)
        try:
            proj = project_to_pixel(camera, target_base)
        except NonPositiveDepth:
            views.append(ViewMatch(None, None, None, None, center))
            continue
        if not boxes:
            views.append(ViewMatch(proj, None, None, None, center))
            continue
        errs = [float(np.hypot(proj.u - bbox_center(b).u, proj.v - bbox_center(b).v))
                for b in boxes]
        k = int(np.argmin(errs))
        views.append(ViewMatch(proj, boxes[k], k, errs[k], center))
    views = _consistent_views(views, cameras, target_base, v_tol_px,
                              pair_depth_tol_m, pred_depth_tol_m)
    return TargetAssociation(views=tuple(views))


def visible_in_two(assoc: TargetAssociation, max_error_px: float = 60.0) -> bool:
    """Target counts as verified when at least two views matched tightly."""
    return assoc.matched_count(max_error_px) >= 2


class Move(str, Enum):
    BACK = "back"
    LEFT = "left"
    RIGHT = "right"
    UP = "up"
    DOWN = "down"


class AdjustmentNotNeeded(RuntimeError):
    """Raised when an adjustment is requested for an already-verified target."""


def propose_adjustment(assoc: TargetAssociation, max_error_px: float = 60.0,
                       deadband_px: float = 20.0) -> frozenset:
    """Suggest head moves that should bring the target into two views.

    Always proposes BACK (widening all fields of view), plus the lateral and
    vertical direction of the first available projection relative to its
    image centre when outside the deadband.  Directions follow the image
    convention: a projection left of centre means the head moves left.

    Raises:
        AdjustmentNotNeeded: when the target is already visible in two views.
    """
    if visible_in_two(assoc, max_error_px):
        raise AdjustmentNotNeeded("target already verified in two views")
    moves = {Move.BACK}
    for view in assoc.views:
        if view.projection is None:
            continue
        du = view.projection.u - view.image_center.u
        dv = view.projection.v - view.image_center.v
        if du < -deadband_px:
            moves.add(Move.LEFT)
        elif du > deadband_px:
            moves.add(Move.RIGHT)
        if dv < -deadband_px:
            moves.add(Move.UP)
        elif dv > deadband_px:
            moves.add(Move.DOWN)
        break
    return frozenset(moves)


MOVE_DIRECTIONS = {
    Move.BACK: np.array([-1.0, 0.0, 0.0]),
    Move.LEFT: np.array([0.0, 1.0, 0.0]),
    Move.RIGHT: np.array([0.0, -1.0, 0.0]),
    Move.UP: np.array([0.0, 0.0, 1.0]),
    Move.DOWN: np.array([0.0, 0.0, -1.0]),
}


def adjustment_vector(moves: frozenset, step: float) -> np.ndarray:
    """Base-frame displacement for a set of proposed moves."""
    out = np.zeros(3)
    for m in moves:
        out += MOVE_DIRECTIONS[m]
    return out * step
