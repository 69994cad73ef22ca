"""Camera rig riding on the picking head.

One forward-looking overview camera sits above the head and surveys the whole
workspace from the home pose.  Three identical close-range cameras sit below
the head (left, middle, right, 25 mm apart) and verify the target during the
final approach.  The head translates without rotating, so every camera keeps
a fixed orientation and simply follows the end-effector position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, Intrinsics, RigidTransform, camera_looking_at, vec3


@dataclass(frozen=True)
class CameraRig:
    """Rig geometry expressed in the end-effector frame (metres)."""

    home_position: tuple = (0.08, 0.0, 0.40)
    top_offset: tuple = (-0.04, 0.0, 0.08)
    top_look_target: tuple = (0.41, 0.0, 0.33)
    top_intrinsics: Intrinsics = field(default_factory=lambda: Intrinsics(
        fx=610.0, fy=610.0, cx=424.0, cy=240.0, width=848, height=480))
    bottom_offset: tuple = (-0.06, 0.0, -0.05)
    bottom_baseline: float = 0.025
    bottom_look_ahead: tuple = (0.10, 0.0, 0.0)
    bottom_intrinsics: Intrinsics = field(default_factory=lambda: Intrinsics(
        fx=200.0, fy=200.0, cx=320.0, cy=240.0, width=640, height=480))
    head_plane_margin: float = 0.01
    close_range_cutoff: float = 0.12

    def camera_plane_x(self, ee_position) -> float:
        """Base x of the close-range camera plane; nothing behind it images."""
        return float(ee_position[0]) + self.bottom_offset[0]

    def top_camera_at(self, ee_position: np.ndarray) -> CameraModel:
        """Overview camera posed for the given end-effector position.

        The look target is fixed in the base frame (the workspace centre),
        which matches a camera aimed once during setup.
        """
        pos = np.asarray(ee_position, dtype=float) + np.asarray(self.top_offset)
        pose = camera_looking_at(pos, np.asarray(self.top_look_target, dtype=float))
        return CameraModel(self.top_intrinsics, pose)

    def bottom_cameras_at(self, ee_position: np.ndarray) -> list[CameraModel]:
        """Right, middle, left close-range cameras at the given head position.

        All three share one orientation (parallel optical axes) so horizontal
        disparity between views encodes depth directly.
        """
        ee = np.asarray(ee_position, dtype=float)
        mid = ee + np.asarray(self.bottom_offset)
        look = mid + np.asarray(self.bottom_look_ahead)
        base_pose = camera_looking_at(mid, look)
        cams = []
        for dy in (-self.bottom_baseline, 0.0, self.bottom_baseline):
            pose = RigidTransform(base_pose.rotation, mid + vec3(0.0, dy, 0.0))
            cams.append(CameraModel(self.bottom_intrinsics, pose))
        return cams

    def home(self) -> np.ndarray:
        return np.asarray(self.home_position, dtype=float)


DEFAULT_RIG = CameraRig()
