"""Master configuration: one JSON document drives the whole simulator.

The document has four sections: ``scene`` (what grows where), ``trial``
(how the head behaves), ``rig`` (camera geometry), and ``gpr`` (how the
picking-point corrector is obtained).  Unknown keys anywhere are an error;
a default document is available from :func:`default_config` and via the
command line.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional

from .geometry import Intrinsics
from .motion import ForceParams
from .orchestrator import CalibratedRates, TimeConstants, TrialConfig
from .picking_head import CaptureWindow, HsvRange, HsvRanges
from .rig import CameraRig
from .scene import SceneConfig, Variety
from .scheduler import SortDirection
from .sensors import DetectorConfig, SensorNoiseModel


class ConfigError(ValueError):
    """Raised for unknown keys, bad values, or malformed config documents."""


@dataclass(frozen=True)
class GprSettings:
    """How the corrector model is obtained for a run.

    mode "teach" fits a fresh model from simulated teach-in samples,
    "file" loads a serialised model, "off" disables correction.
    """

    mode: str = "teach"
    path: Optional[str] = None
    teach_samples: int = 150
    teach_seed: int = 0
    sigma0_sq: float = 1.0
    jitter: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("teach", "file", "off"):
            raise ConfigError(f"gpr mode must be teach, file, or off, not {self.mode!r}")
        if self.mode == "file" and not self.path:
            raise ConfigError("gpr mode 'file' needs a path")


@dataclass(frozen=True)
class SimConfig:
    scene: SceneConfig = dataclasses.field(default_factory=SceneConfig)
    trial: TrialConfig = dataclasses.field(default_factory=lambda: TrialConfig(
        calibrated=CalibratedRates.field_reference()))
    rig: CameraRig = dataclasses.field(default_factory=CameraRig)
    gpr: GprSettings = dataclasses.field(default_factory=GprSettings)


def default_config() -> SimConfig:
    return SimConfig()


def config_to_json(cfg: SimConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), sort_keys=True, indent=2) + "\n"


def _build(cls, doc: dict, casts: dict):
    if not isinstance(doc, dict):
        raise ConfigError(f"{cls.__name__} section must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in doc:
            continue
        value = doc[f.name]
        cast = casts.get(f.name)
        try:
            kwargs[f.name] = cast(value) if cast else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{cls.__name__}.{f.name}: {exc}") from exc
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def _tuple(v):
    return tuple(v)


def _scene_config(doc: dict) -> SceneConfig:
    return _build(SceneConfig, doc, {
        "variety": Variety,
        "workspace_min": _tuple, "workspace_max": _tuple,
        "radius_range": _tuple, "mass_range": _tuple,
        "punnet_position": _tuple,
    })


def _hsv_ranges(doc: dict) -> HsvRanges:
    return _build(HsvRanges, doc, {
        "low": lambda d: _build(HsvRange, d, {"lower": _tuple, "upper": _tuple}),
        "high": lambda d: _build(HsvRange, d, {"lower": _tuple, "upper": _tuple}),
    })


def _trial_config(doc: dict) -> TrialConfig:
    return _build(TrialConfig, doc, {
        "noise": lambda d: _build(SensorNoiseModel, d, {
            "axis_error_mean": _tuple, "axis_error_sd": _tuple}),
        "detector": lambda d: _build(DetectorConfig, d, {}),
        "force": lambda d: _build(ForceParams, d, {}),
        "window": lambda d: _build(CaptureWindow, d, {}),
        "hsv": _hsv_ranges,
        "time": lambda d: _build(TimeConstants, d, {}),
        "calibrated": lambda d: None if d is None else _build(CalibratedRates, d, {}),
        "direction": SortDirection,
        "stem_band_m": _tuple,
    })


def _rig_config(doc: dict) -> CameraRig:
    intr = lambda d: _build(Intrinsics, d, {})
    return _build(CameraRig, doc, {
        "home_position": _tuple, "top_offset": _tuple, "top_look_target": _tuple,
        "bottom_offset": _tuple, "bottom_look_ahead": _tuple,
        "top_intrinsics": intr, "bottom_intrinsics": intr,
    })


def config_from_dict(doc: dict) -> SimConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    unknown = sorted(set(doc) - {"scene", "trial", "rig", "gpr"})
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    return SimConfig(
        scene=_scene_config(doc.get("scene", {})),
        trial=_trial_config(doc.get("trial", {})),
        rig=_rig_config(doc.get("rig", {})),
        gpr=_build(GprSettings, doc.get("gpr", {}), {}),
    )


def config_from_json(text: str) -> SimConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def load_config(path: Optional[str]) -> SimConfig:
    if path is None:
        return default_config()
    try:
        with open(path, encoding="utf-8") as fh:
            return config_from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
