"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from robofruit_sim.geometry import CameraModel, Intrinsics, camera_looking_at
from robofruit_sim.scene import VARIETIES, Berry, Variety, VarietyParams, make_key_points

VGA = Intrinsics(fx=200.0, fy=200.0, cx=320.0, cy=240.0, width=640, height=480)


def make_camera(position, target, intrinsics: Intrinsics = VGA) -> CameraModel:
    pose = camera_looking_at(np.asarray(position, float), np.asarray(target, float))
    return CameraModel(intrinsics, pose)


def make_berry(center, berry_id: int = 0, radius: float = 0.015,
               ripeness: float = 1.0, stem_diameter_mm: float = 2.0,
               mass_kg: float = 0.04, occluder_ids: tuple = ()) -> Berry:
    kp = make_key_points(np.asarray(center, float), radius,
                         stem_clearance=0.015, grasp_half_span=0.006)
    return Berry(id=berry_id, key_points=kp, radius=radius, ripeness=ripeness,
                 stem_diameter_mm=stem_diameter_mm, mass_kg=mass_kg,
                 occluder_ids=occluder_ids)


def katrina() -> VarietyParams:
    return VARIETIES[Variety.KATRINA]
