"""Synthetic sensing: berry detection, depth sampling, and close-range images.

Everything here is a pure function of (scene, camera, config, seed).  Random
draws come from a ``numpy`` PCG64 stream created locally from the seed, and
are consumed in a fixed order (berry id, then camera), so repeated calls with
identical arguments produce identical observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import BoundingBox, CameraModel, Pixel, project_to_pixel
from .scene import Berry, Scene, ground_truth_pluckable


@dataclass(frozen=True)
class SensorNoiseModel:
    """Per-axis localisation error and depth-sample noise.

    ``axis_error_mean`` and ``axis_error_sd`` describe the systematic plus
    random error (metres, base frame) added to each reconstructed position.
    Depth samples get independent Gaussian noise of ``depth_noise_sd``.
    """

    axis_error_mean: tuple = (0.062, 0.009, -0.019)
    axis_error_sd: tuple = (0.012, 0.014, 0.016)
    depth_noise_sd: float = 0.005

    @staticmethod
    def noise_free() -> "SensorNoiseModel":
        return SensorNoiseModel((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0)


@dataclass(frozen=True)
class DetectorConfig:
    """Detector behaviour knobs.

    ``miss_prob`` is the chance a berry goes entirely unreported; the draw is
    made from a dedicated per-berry stream when ``miss_seed`` is passed to
    :func:`observe_top`, so a miss persists across re-detections within one
    trial.  ``class_error_prob`` flips the pluckable/unpluckable call.
    """

    miss_prob: float = 0.0
    class_error_prob: float = 0.05
    px_jitter: float = 2.0
    ripeness_threshold: float = 0.8
    depth_px: int = 50
    dropout_below: float = 0.20
    dropout_above: float = 0.50


@dataclass(frozen=True)
class DepthObservation:
    """Raw depth samples (metres) plus the per-axis error this observation
    will induce in the reconstructed position."""

    samples: np.ndarray
    per_axis_error: np.ndarray


@dataclass(frozen=True)
class Detection:
    """One detector hit in the overview camera."""

    bbox: BoundingBox
    predicted_pluckable: bool
    depth: DepthObservation
    key_points_px: dict
    berry_id_truth: int


def _stable_flip(master_seed: int, berry_id: int, channel: int, prob: float) -> bool:
    """Bernoulli draw that depends only on (seed, berry, channel)."""
    if prob <= 0.0:
        return False
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, berry_id, channel]))
    return bool(rng.random() < prob)


def observe_top(scene: Scene, camera: CameraModel, noise: SensorNoiseModel,
                detector: DetectorConfig, seed: int,
                miss_seed: Optional[int] = None) -> list[Detection]:
    """Run the overview detector over every berry in the scene.

    A berry is reported when its flesh centre projects inside the sensor, its
    camera-frame depth lies inside the detector's working range, and the miss
    draw passes.  Box corners carry uniform jitter of ``px_jitter`` pixels.

    When ``miss_seed`` is given, miss and classification draws come from
    per-berry streams keyed on it instead of the frame stream, making them
    stable across frames of the same trial.
    """
    rng = np.random.default_rng(seed)
    intr = camera.intrinsics
    out: list[Detection] = []
    for berry in scene.berries:
        center_base = berry.key_points.flesh_center
        cam_pt = camera.base_from_camera.inverse_apply(center_base)
        z = cam_pt[2]
        if z <= 0.0:
            continue
        center_px = Pixel(intr.fx * cam_pt[0] / z + intr.cx,
                          intr.fy * cam_pt[1] / z + intr.cy)
        if not intr.contains(center_px):
            continue
        if not detector.dropout_below < z < detector.dropout_above:
            continue

        if miss_seed is not None:
            missed = _stable_flip(miss_seed, berry.id, 0, detector.miss_prob)
            flipped = _stable_flip(miss_seed, berry.id, 1, detector.class_error_prob)
        else:
            missed = rng.random() < detector.miss_prob if detector.miss_prob > 0 else False
            flipped = rng.random() < detector.class_error_prob if detector.class_error_prob > 0 else False
        if missed:
            continue

        ru = intr.fx * berry.radius / z
        rv = intr.fy * berry.radius / z
        j = detector.px_jitter
        jit = rng.uniform(-j, j, size=4) if j > 0 else np.zeros(4)
        bbox = BoundingBox(center_px.u - ru + jit[0], center_px.v - rv + jit[1],
                           center_px.u + ru + jit[2], center_px.v + rv + jit[3])

        truth = ground_truth_pluckable(berry, detector.ripeness_threshold)
        predicted = (not truth) if flipped else truth

        samples = z + noise.depth_noise_sd * rng.standard_normal(detector.depth_px)
        samples = np.abs(samples)
        axis_err = (np.asarray(noise.axis_error_mean)
                    + np.asarray(noise.axis_error_sd) * rng.standard_normal(3))
        key_px = {}
        for name in ("flesh_center", "top", "pp", "lgp", "rgp"):
            p = camera.base_from_camera.inverse_apply(getattr(berry.key_points, name))
            key_px[name] = Pixel(intr.fx * p[0] / p[2] + intr.cx,
                                 intr.fy * p[1] / p[2] + intr.cy)
        out.append(Detection(bbox=bbox, predicted_pluckable=bool(predicted),
                             depth=DepthObservation(samples=samples,
                                                    per_axis_error=axis_err),
                             key_points_px=key_px, berry_id_truth=berry.id))
    return out


def filter_and_average_depth(obs: DepthObservation, near: float = 0.20,
                             far: float = 0.50) -> float:
    """Mean of the depth samples inside (near, far).

    Raises:
        ValueError: when no sample survives the band filter.
    """
    samples = np.asarray(obs.samples, dtype=float)
    kept = samples[(samples > near) & (samples < far)]
    if kept.size == 0:
        raise ValueError("no depth samples inside the working range")
    return float(kept.mean())


def observe_bottom(scene: Scene, cameras: list[CameraModel], seed: int,
                   px_jitter: float = 2.0,
                   head_plane_x: Optional[float] = None,
                   plane_margin: float = 0.01) -> list[list[BoundingBox]]:
    """Project every berry into each close-range camera.

    Returns one box list per camera, ordered as the cameras are given.  A
    berry appears in a view when its centre projects inside the sensor at
    positive depth; berries behind the head plane (base x below
    ``head_plane_x - plane_margin``) are omitted from all views.  A berry
    whose centre projects inside a strictly nearer berry's disk is hidden
    by it and yields no box in that view.
    """
    rng = np.random.default_rng(seed)
    out: list[list[BoundingBox]] = []
    for camera in cameras:
        intr = camera.intrinsics
        candidates = []
        for berry in scene.berries:
            c = berry.key_points.flesh_center
            if head_plane_x is not None and c[0] < head_plane_x - plane_margin:
                continue
            p = camera.base_from_camera.inverse_apply(c)
            if p[2] <= 0.0:
                continue
            px = Pixel(intr.fx * p[0] / p[2] + intr.cx,
                       intr.fy * p[1] / p[2] + intr.cy)
            if not intr.contains(px):
                continue
            ru = intr.fx * berry.radius / p[2]
            rv = intr.fy * berry.radius / p[2]
            candidates.append((float(p[2]), px, ru, rv))

        candidates.sort(key=lambda c: c[0])
        kept: list[tuple] = []
        for z, px, ru, rv in candidates:
            covered = any(((px.u - q.u) / qru) ** 2 + ((px.v - q.v) / qrv) ** 2 < 1.0
                          for _, q, qru, qrv in kept)
            if not covered:
                kept.append((z, px, ru, rv))

        boxes: list[BoundingBox] = []
        for _, px, ru, rv in kept:
            jit = rng.uniform(-px_jitter, px_jitter, size=4) if px_jitter > 0 else np.zeros(4)
            boxes.append(BoundingBox(px.u - ru + jit[0], px.v - rv + jit[1],
                                     px.u + ru + jit[2], px.v + rv + jit[3]))
        out.append(boxes)
    return out


# --- close-range rendering ------------------------------------------------

_BACKGROUND = (105, 105, 105)


@dataclass(frozen=True)
class ColorPatch:
    """Row-major RGB image region, channels as uint8."""

    rgb: np.ndarray
    origin: Pixel

    def __post_init__(self):
        a = np.asarray(self.rgb, dtype=np.uint8)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("rgb must have shape (h, w, 3)")
        object.__setattr__(self, "rgb", a)


class WindowOutOfBounds(ValueError):
    """Raised when a render window leaves the sensor."""


def _berry_color(berry: Berry, ripeness_threshold: float = 0.8) -> tuple:
    """Stable per-berry colour: reds for ripe fruit, pale greens otherwise."""
    crng = np.random.default_rng(np.random.SeedSequence([77, berry.id]))
    if ground_truth_pluckable(berry, ripeness_threshold):
        return (int(crng.integers(200, 256)), int(crng.integers(0, 60)),
                int(crng.integers(0, 60)))
    return (int(crng.integers(150, 191)), int(crng.integers(205, 241)),
            int(crng.integers(140, 181)))


def render_bottom_patch(scene: Scene, camera: CameraModel, window: BoundingBox,
                        seed: int, glare_prob: float = 0.0,
                        far_cutoff: float = 0.12,
                        held: Optional[tuple] = None,
                        head_plane_x: Optional[float] = None,
                        plane_margin: float = 0.01) -> ColorPatch:
    """Rasterise the berries visible to a close-range camera inside a window.

    Berries render as filled ellipses over a neutral background, far-to-near
    so closer fruit occludes.  Only berries within ``far_cutoff`` of the
    camera are drawn, which is what makes the confirmation views local to the
    gripper.  ``held`` optionally injects one extra sphere (centre, radius,
    berry) for fruit already cut and carried.  Glare overwrites each pixel
    independently with near-white at ``glare_prob``.

    Raises:
        WindowOutOfBounds: when the window leaves the sensor.
    """
    intr = camera.intrinsics
    x1, y1 = int(window.xp1), int(window.yp1)
    x2, y2 = int(window.xp2), int(window.yp2)
    if x1 < 0 or y1 < 0 or x2 > intr.width - 1 or y2 > intr.height - 1:
        raise WindowOutOfBounds(f"window {window} exceeds {intr.width}x{intr.height}")
    w, h = x2 - x1 + 1, y2 - y1 + 1
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:, :] = _BACKGROUND

    spheres = []
    for berry in scene.berries:
        c = berry.key_points.flesh_center
        if head_plane_x is not None and c[0] < head_plane_x - plane_margin:
            continue
        spheres.append((c, berry.radius, berry))
    if held is not None:
        spheres.append(held)

    depth_of = []
    for c, r, b in spheres:
        p = camera.base_from_camera.inverse_apply(c)
        if p[2] <= 0.0 or p[2] > far_cutoff:
            continue
        depth_of.append((p[2], p, r, b))
    depth_of.sort(key=lambda t: -t[0])  # paint far first

    ys, xs = np.mgrid[y1:y2 + 1, x1:x2 + 1]
    for z, p, r, berry in depth_of:
        u = intr.fx * p[0] / z + intr.cx
        v = intr.fy * p[1] / z + intr.cy
        ru = intr.fx * r / z
        rv = intr.fy * r / z
        mask = ((xs - u) / ru) ** 2 + ((ys - v) / rv) ** 2 <= 1.0
        img[mask] = _berry_color(berry)

    if glare_prob > 0.0:
        rng = np.random.default_rng(seed)
        gl = rng.random((h, w)) < glare_prob
        img[gl] = rng.integers(242, 256, size=(int(gl.sum()), 3))
    return ColorPatch(rgb=img, origin=Pixel(float(x1), float(y1)))


def patch_to_ppm(patch: ColorPatch) -> bytes:
    """Binary PPM (P6) encoding, handy for eyeballing renders."""
    h, w, _ = patch.rgb.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + patch.rgb.tobytes()


def detection_for_berry(detections: list[Detection], berry_id: int) -> Optional[Detection]:
    for det in detections:
        if det.berry_id_truth == berry_id:
            return det
    return None


def estimate_radius(det: Detection, camera: CameraModel, depth: float) -> float:
    """Berry radius implied by the detection box size at a known depth."""
    intr = camera.intrinsics
    return 0.5 * (0.5 * det.bbox.width * depth / intr.fx
                  + 0.5 * det.bbox.height * depth / intr.fy)


def berry_depth_in(camera: CameraModel, point_base: np.ndarray) -> float:
    """Camera-frame depth of a base-frame point (may be non-positive)."""
    return float(camera.base_from_camera.inverse_apply(point_base)[2])
