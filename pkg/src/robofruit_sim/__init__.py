"""Deterministic simulator for a strawberry-harvesting robot.

The package models the full picking loop of a tabletop harvesting rig: an
overview camera detects fruit, a scheduler orders targets, the head
approaches, three close-range cameras verify and refine the picking point
(optionally through a learned corrector), a gripper-cutter takes the stem,
colour checks confirm and validate the pick, and berries are placed in a
punnet.  Every run is a pure function of (config, seed).
"""

from . import (cli, config, geometry, gpr, metrics, motion, orchestrator,
               perception, picking_head, rig, scene, scheduler, sensors,
               teaching)
from .config import SimConfig, default_config
from .orchestrator import Outcome, TrialConfig, TrialLog, run_trial
from .scene import SceneConfig, generate_scene

__version__ = "0.1.0"

__all__ = [
    "cli", "config", "geometry", "gpr", "metrics", "motion", "orchestrator",
    "perception", "picking_head", "rig", "scene", "scheduler", "sensors",
    "teaching", "SimConfig", "default_config", "Outcome", "TrialConfig",
    "TrialLog", "run_trial", "SceneConfig", "generate_scene", "__version__",
]
