"""Camera geometry: pinhole projection, rigid transforms, and box association.

Frame conventions used throughout the package:

* Robot base frame: x points from the robot toward the fruit table, y points
  left, z points up.  Units are metres.
* Camera frame: z points forward along the optical axis, x points right in
  the image, y points down.  A pixel (u, v) has u growing rightward and v
  growing downward, with (0, 0) at the top-left corner.

Points are plain ``numpy`` arrays of shape (3,); pixels are ``Pixel`` named
tuples.  All transforms are proper rigid transforms (rotation + translation).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class NonPositiveDepth(ValueError):
    """Raised when a point to be projected sits at or behind the camera plane."""


class Pixel(NamedTuple):
    """Image-plane coordinate in pixels.  May lie outside the sensor bounds."""

    u: float
    v: float


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """Build a float64 3-vector."""
    return np.array([x, y, z], dtype=float)


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics with sensor size in whole pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor size must be positive")

    def contains(self, px: Pixel) -> bool:
        """True when the pixel lies on the sensor."""
        return 0.0 <= px.u <= self.width - 1 and 0.0 <= px.v <= self.height - 1


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation mapping child-frame points into the parent frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        tra = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-8):
            raise ValueError("rotation must be orthonormal")
        if not np.isclose(np.linalg.det(rot), 1.0, atol=1e-8):
            raise ValueError("rotation must be proper (det = +1)")

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, point: np.ndarray) -> np.ndarray:
        """Map a child-frame point into the parent frame."""
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def inverse_apply(self, point: np.ndarray) -> np.ndarray:
        """Map a parent-frame point into the child frame."""
        return self.rotation.T @ (np.asarray(point, dtype=float) - self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self * other, applying ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass(frozen=True)
class CameraModel:
    """A pinhole camera posed in the robot base frame.

    ``base_from_camera`` maps camera-frame points into the base frame, so the
    camera's position in the base frame is its translation part.
    """

    intrinsics: Intrinsics
    base_from_camera: RigidTransform = field(default_factory=RigidTransform.identity)

    def to_dict(self) -> dict:
        """Serialize to the flat exchange form (row-major rotation)."""
        i = self.intrinsics
        return {
            "fx": i.fx, "fy": i.fy, "cx": i.cx, "cy": i.cy,
            "width": i.width, "height": i.height,
            "rotation": [float(v) for v in self.base_from_camera.rotation.reshape(9)],
            "translation": [float(v) for v in self.base_from_camera.translation],
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraModel":
        intr = Intrinsics(fx=float(d["fx"]), fy=float(d["fy"]),
                          cx=float(d["cx"]), cy=float(d["cy"]),
                          width=int(d["width"]), height=int(d["height"]))
        pose = RigidTransform(np.array(d["rotation"], dtype=float).reshape(3, 3),
                              np.array(d["translation"], dtype=float))
        return CameraModel(intr, pose)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box with corner ordering normalised at construction."""

    xp1: float
    yp1: float
    xp2: float
    yp2: float

    def __post_init__(self):
        if self.xp1 > self.xp2:
            x1, x2 = self.xp2, self.xp1
            object.__setattr__(self, "xp1", x1)
            object.__setattr__(self, "xp2", x2)
        if self.yp1 > self.yp2:
            y1, y2 = self.yp2, self.yp1
            object.__setattr__(self, "yp1", y1)
            object.__setattr__(self, "yp2", y2)

    @property
    def width(self) -> float:
        return self.xp2 - self.xp1

    @property
    def height(self) -> float:
        return self.yp2 - self.yp1


def bbox_center(box: BoundingBox) -> Pixel:
    """Pixel midpoint of a bounding box."""
    return Pixel(0.5 * (box.xp1 + box.xp2), 0.5 * (box.yp1 + box.yp2))


def project_to_pixel(camera: CameraModel, point_base: np.ndarray) -> Pixel:
    """Project a base-frame point through the pinhole model.

    Args:
        camera: posed camera.
        point_base: (3,) point in the robot base frame.

    Returns:
        Pixel coordinates; these may fall outside the sensor bounds.

    Raises:
        NonPositiveDepth: when the point is at or behind the camera plane.
    """
    p = camera.base_from_camera.inverse_apply(point_base)
    if p[2] <= 0.0:
        raise NonPositiveDepth(f"camera-frame depth {p[2]:.6f} is not positive")
    i = camera.intrinsics
    return Pixel(i.fx * p[0] / p[2] + i.cx, i.fy * p[1] / p[2] + i.cy)


def pixel_depth_to_base(camera: CameraModel, px: Pixel, depth: float) -> np.ndarray:
    """Back-project a pixel at a given camera-frame depth into the base frame.

    ``depth`` is the z coordinate in the camera frame, not the ray length.

    Raises:
        NonPositiveDepth: when depth <= 0.
    """
    if depth <= 0.0:
        raise NonPositiveDepth(f"depth {depth:.6f} is not positive")
    i = camera.intrinsics
    p_cam = np.array([(px.u - i.cx) * depth / i.fx,
                      (px.v - i.cy) * depth / i.fy,
                      depth])
    return camera.base_from_camera.apply(p_cam)


def association_error(camera: CameraModel, target_base: np.ndarray,
                      box: BoundingBox) -> float:
    """Pixel distance between a projected target and a detection box centre.

    This is the matching cost used to associate a 3D target estimate with a
    2D detection in a given camera view.

    Raises:
        NonPositiveDepth: when the target is at or behind the camera plane.
    """
    proj = project_to_pixel(camera, target_base)
    ctr = bbox_center(box)
    return float(np.hypot(proj.u - ctr.u, proj.v - ctr.v))


def camera_looking_at(position: np.ndarray, target: np.ndarray,
                      up: np.ndarray | None = None) -> RigidTransform:
    """Pose a camera at ``position`` with its optical axis through ``target``.

    The camera x axis (image right) is chosen perpendicular to ``up`` so the
    image stays level; the y axis (image down) completes the right-handed
    frame.  ``up`` defaults to base +z.

    Raises:
        ValueError: when position and target coincide, or the view direction
            is parallel to ``up``.
    """
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    up = vec3(0.0, 0.0, 1.0) if up is None else np.asarray(up, dtype=float)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("camera position and target coincide")
    forward = forward / norm
    x_cam = np.cross(forward, up)
    x_norm = np.linalg.norm(x_cam)
    if x_norm < 1e-12:
        raise ValueError("view direction is parallel to the up vector")
    x_cam = x_cam / x_norm
    y_cam = np.cross(forward, x_cam)
    rotation = np.column_stack([x_cam, y_cam, forward])
    return RigidTransform(rotation, position)
