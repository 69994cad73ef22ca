"""Synthetic tabletop scenes: berries with stems, occlusion, and a punnet.

A scene is a static snapshot of one picking station: a set of strawberries
hanging over a table edge, a punnet to fill, and the variety parameters that
drive stem mechanics.  Scenes are generated deterministically from a config
plus a seed and can be saved to and restored from JSON without loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable

import numpy as np

from .geometry import RigidTransform, vec3


class Variety(str, Enum):
    KATRINA = "katrina"
    ZARA = "zara"
    GENERIC = "generic"


@dataclass(frozen=True)
class VarietyParams:
    """Mechanical parameters of one strawberry variety.

    Stem diameters are in millimetres; forces in newtons.  ``peak_cut_force``
    is the force needed to sever a nominal-diameter stem and
    ``peak_compression_force`` is the load the fruit tolerates before damage.
    """

    name: Variety
    stem_diameter_mean_mm: float
    stem_diameter_sd_mm: float
    peak_cut_force_n: float
    peak_compression_force_n: float


VARIETIES: dict[Variety, VarietyParams] = {
    Variety.KATRINA: VarietyParams(Variety.KATRINA, 1.75, 0.24, 7.20, 26.83),
    Variety.ZARA: VarietyParams(Variety.ZARA, 1.76, 0.25, 5.80, 22.53),
    Variety.GENERIC: VarietyParams(Variety.GENERIC, 1.76, 0.25, 6.50, 22.53),
}


@dataclass(frozen=True)
class KeyPoints:
    """Named 3D points on one berry, all in the robot base frame.

    ``pp`` is the picking point on the stem, ``top`` the stem-flesh junction,
    ``lgp``/``rgp`` the lateral grasp points, ``flesh_center`` the sphere
    centre used for rendering and collision.
    """

    flesh_center: np.ndarray
    top: np.ndarray
    pp: np.ndarray
    lgp: np.ndarray
    rgp: np.ndarray

    def as_dict(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)]
                for k in ("flesh_center", "top", "pp", "lgp", "rgp")}


@dataclass(frozen=True)
class Berry:
    id: int
    key_points: KeyPoints
    radius: float
    ripeness: float
    stem_diameter_mm: float
    mass_kg: float
    occluder_ids: frozenset[int]

    def __post_init__(self):
        if not 0.0 <= self.ripeness <= 1.0:
            raise ValueError("ripeness must lie in [0, 1]")
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class Punnet:
    """Six-slot container, slots on a 2 x 3 grid inside the rim margin."""

    pose: RigidTransform
    width: float = 0.12
    length: float = 0.18
    margin: float = 0.01
    occupancy: tuple = (None,) * 6

    def slot_offsets(self) -> list[np.ndarray]:
        """Slot centres in the punnet frame, row-major, z = 0."""
        xs = [-(self.width - 2 * self.margin) / 4, (self.width - 2 * self.margin) / 4]
        ys = [-(self.length - 2 * self.margin) / 3, 0.0,
              (self.length - 2 * self.margin) / 3]
        return [vec3(x, y, 0.0) for x in xs for y in ys]


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for scene generation.  Distances in metres."""

    berry_count: int = 20
    ripe_fraction: float = 0.42
    variety: Variety = Variety.KATRINA
    # Fruit hang off the gutter edge in a shallow wall, so the depth span
    # is much tighter than the lateral and vertical spans.
    workspace_min: tuple = (0.40, -0.22, 0.27)
    workspace_max: tuple = (0.45, 0.22, 0.40)
    min_separation: float = 0.038
    radius_range: tuple = (0.012, 0.018)
    stem_clearance: float = 0.015
    grasp_half_span: float = 0.006
    occlusion_radius: float = 0.035
    mass_range: tuple = (0.030, 0.050)
    punnet_position: tuple = (0.30, -0.30, 0.20)
    table_plane_x: float = 0.52

    def __post_init__(self):
        if self.berry_count < 0:
            raise ValueError("berry_count must be non-negative")
        if not 0.0 <= self.ripe_fraction <= 1.0:
            raise ValueError("ripe_fraction must lie in [0, 1]")
        lo, hi = np.asarray(self.workspace_min), np.asarray(self.workspace_max)
        if not np.all(lo < hi):
            raise ValueError("workspace_min must be strictly below workspace_max")
        if self.min_separation < 0:
            raise ValueError("min_separation must be non-negative")


@dataclass(frozen=True)
class Scene:
    berries: tuple
    punnet: Punnet
    variety: Variety
    seed: int
    table_plane_x: float

    def berry_by_id(self, berry_id: int) -> Berry:
        for b in self.berries:
            if b.id == berry_id:
                return b
        raise KeyError(berry_id)


def make_key_points(flesh_center: np.ndarray, radius: float,
                    stem_clearance: float, grasp_half_span: float) -> KeyPoints:
    """Derive the named points from a flesh centre; stems hang vertically."""
    top = flesh_center + vec3(0.0, 0.0, radius)
    pp = top + vec3(0.0, 0.0, stem_clearance)
    return KeyPoints(flesh_center=flesh_center, top=top, pp=pp,
                     lgp=pp - vec3(0.0, grasp_half_span, 0.0),
                     rgp=pp + vec3(0.0, grasp_half_span, 0.0))


def ground_truth_pluckable(berry: Berry, threshold: float = 0.8) -> bool:
    """A berry is pluckable when its ripeness reaches the threshold."""
    return berry.ripeness >= threshold


def _occluder_map(centers: np.ndarray, radius: float) -> list[frozenset[int]]:
    """Pairwise proximity relation; symmetric by construction."""
    n = len(centers)
    out: list[set[int]] = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(centers[i] - centers[j]) < radius:
                out[i].add(j)
                out[j].add(i)
    return [frozenset(s) for s in out]


def generate_scene(config: SceneConfig, seed: int,
                   ripeness_threshold: float = 0.8) -> Scene:
    """Generate a deterministic scene from (config, seed).

    The ripe berry count is ``round(berry_count * ripe_fraction)``; which
    berries are ripe, and every geometric attribute, comes from a PCG64
    stream seeded with ``seed`` alone, so identical inputs give identical
    scenes bit for bit.
    """
    rng = np.random.default_rng(seed)
    n = config.berry_count
    lo = np.asarray(config.workspace_min, dtype=float)
    hi = np.asarray(config.workspace_max, dtype=float)

    centers = np.empty((n, 3))
    got = 0
    tries = 0
    while got < n:
        if tries > 10_000 * max(1, n):
            raise ValueError("cannot place berries: min_separation too large "
                             "for the workspace")
        tries += 1
        cand = rng.uniform(lo, hi)
        # berries are solid: reject candidates that would interpenetrate
        if any(np.linalg.norm(cand - centers[k]) < config.min_separation
               for k in range(got)):
            continue
        centers[got] = cand
        got += 1

    radii = rng.uniform(*config.radius_range, size=n)
    masses = rng.uniform(*config.mass_range, size=n)
    params = VARIETIES[config.variety]
    stems = params.stem_diameter_mean_mm + params.stem_diameter_sd_mm * rng.standard_normal(n)
    stems = np.maximum(stems, 0.5)

    n_ripe = int(round(n * config.ripe_fraction))
    ripe_ids = set(rng.permutation(n)[:n_ripe].tolist())
    ripeness = np.where(
        [i in ripe_ids for i in range(n)],
        rng.uniform(ripeness_threshold, 1.0, size=n),
        rng.uniform(0.0, ripeness_threshold, size=n) * 0.999,
    )

    occluders = _occluder_map(centers, config.occlusion_radius)
    berries = tuple(
        Berry(
            id=i,
            key_points=make_key_points(centers[i], radii[i],
                                       config.stem_clearance,
                                       config.grasp_half_span),
            radius=float(radii[i]),
            ripeness=float(ripeness[i]),
            stem_diameter_mm=float(stems[i]),
            mass_kg=float(masses[i]),
            occluder_ids=occluders[i],
        )
        for i in range(n)
    )
    punnet = Punnet(pose=RigidTransform(np.eye(3), np.asarray(config.punnet_position,
                                                              dtype=float)))
    return Scene(berries=berries, punnet=punnet, variety=config.variety,
                 seed=seed, table_plane_x=config.table_plane_x)


def scene_to_json(scene: Scene) -> str:
    """Lossless JSON form; float repr round-trips exactly."""
    doc = {
        "seed": scene.seed,
        "variety": scene.variety.value,
        "table_plane_x": scene.table_plane_x,
        "punnet": {
            "rotation": [float(v) for v in scene.punnet.pose.rotation.reshape(9)],
            "translation": [float(v) for v in scene.punnet.pose.translation],
            "width": scene.punnet.width,
            "length": scene.punnet.length,
            "margin": scene.punnet.margin,
        },
        "berries": [
            {
                "id": b.id,
                "key_points": b.key_points.as_dict(),
                "radius": b.radius,
                "ripeness": b.ripeness,
                "stem_diameter_mm": b.stem_diameter_mm,
                "mass_kg": b.mass_kg,
                "occluder_ids": sorted(b.occluder_ids),
            }
            for b in scene.berries
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def scene_from_json(text: str) -> Scene:
    doc = json.loads(text)
    berries = tuple(
        Berry(
            id=int(d["id"]),
            key_points=KeyPoints(**{k: np.array(v, dtype=float)
                                    for k, v in d["key_points"].items()}),
            radius=float(d["radius"]),
            ripeness=float(d["ripeness"]),
            stem_diameter_mm=float(d["stem_diameter_mm"]),
            mass_kg=float(d["mass_kg"]),
            occluder_ids=frozenset(int(i) for i in d["occluder_ids"]),
        )
        for d in doc["berries"]
    )
    p = doc["punnet"]
    punnet = Punnet(pose=RigidTransform(np.array(p["rotation"]).reshape(3, 3),
                                        np.array(p["translation"])),
                    width=float(p["width"]), length=float(p["length"]),
                    margin=float(p["margin"]))
    return Scene(berries=berries, punnet=punnet,
                 variety=Variety(doc["variety"]), seed=int(doc["seed"]),
                 table_plane_x=float(doc["table_plane_x"]))


def without_berries(scene: Scene, removed: Iterable[int]) -> Scene:
    """Scene with the given berries taken away (they stop occluding too)."""
    removed = set(removed)
    kept = tuple(
        replace(b, occluder_ids=frozenset(b.occluder_ids - removed))
        for b in scene.berries if b.id not in removed
    )
    return replace(scene, berries=kept)
