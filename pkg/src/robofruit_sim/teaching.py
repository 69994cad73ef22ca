"""Teach-in data generation for the picking-point corrector.

Training runs the real pipeline on single-berry scenes: detect from home,
localise, move to the pre-grasp pose, associate in the close-range views,
and compare the estimated picking point against the taught (true) one.  The
label is the estimate minus the truth, so subtracting a prediction from a
fresh estimate cancels the systematic part of the error.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import gpr, perception
from .orchestrator import TrialConfig, _features_from_association, approach_associate
from .rig import DEFAULT_RIG, CameraRig
from .scene import SceneConfig, generate_scene
from .sensors import estimate_radius, filter_and_average_depth, observe_top


def _pipeline_case(scene_cfg: SceneConfig, config: TrialConfig, rig: CameraRig,
                   seed: int):
    """One teach case: (features, pp_estimate, pp_truth), or None when the
    berry goes undetected or never verifies in two views."""
    scene = generate_scene(replace(scene_cfg, berry_count=1, ripe_fraction=1.0), seed)
    berry = scene.berries[0]
    cam = rig.top_camera_at(rig.home())
    dets = observe_top(scene, cam, config.noise, config.detector, seed)
    if not dets:
        return None
    det = dets[0]
    depth_avg = filter_and_average_depth(det.depth, config.detector.dropout_below,
                                         config.detector.dropout_above)
    flesh_est = perception.localize_target(det, cam, config.detector.dropout_below,
                                           config.detector.dropout_above)
    r_est = estimate_radius(det, cam, depth_avg)
    pp_est = flesh_est + np.array([0.0, 0.0, r_est + config.pp_clearance_m])

    pregrasp = pp_est - np.array([config.standoff_m, 0.0, 0.0])
    seed_state = {"v": seed}

    def next_seed():
        seed_state["v"] += 1
        return seed_state["v"]

    assoc, ee, _, _ = approach_associate(scene, rig, config, flesh_est,
                                         pregrasp.copy(), next_seed)
    if not perception.visible_in_two(assoc, config.max_assoc_error_px):
        return None
    feats = _features_from_association(assoc, ee - pregrasp)
    return feats, pp_est, berry.key_points.pp


def generate_teach_samples(n: int, config: TrialConfig,
                           scene_cfg: SceneConfig = SceneConfig(),
                           rig: CameraRig = DEFAULT_RIG,
                           seed: int = 0) -> list:
    """Collect n teach-in samples by running the pipeline on taught berries."""
    samples = []
    case_seed = seed
    budget = max(1, 100 * n)
    while len(samples) < n:
        if case_seed - seed >= 16 * budget:
            raise RuntimeError("teaching cannot detect enough berries; "
                               "check detector and rig settings")
        case = _pipeline_case(scene_cfg, config, rig, case_seed)
        case_seed += 16
        if case is None:
            continue
        feats, pp_est, pp_true = case
        samples.append(gpr.GprSample(features=feats, label=pp_est - pp_true))
    return samples


def fit_corrector(n: int, config: TrialConfig,
                  scene_cfg: SceneConfig = SceneConfig(),
                  rig: CameraRig = DEFAULT_RIG, seed: int = 0,
                  sigma0_sq: float = 1.0, jitter: float = 1e-6) -> gpr.GprModel:
    """Teach and fit in one step; features are standardised because pixel
    coordinates sit far from the origin."""
    samples = generate_teach_samples(n, config, scene_cfg, rig, seed)
    return gpr.fit(samples, sigma0_sq=sigma0_sq, jitter=jitter, standardize=True)


def evaluate_correction(model, n_cases: int, config: TrialConfig,
                        scene_cfg: SceneConfig = SceneConfig(),
                        rig: CameraRig = DEFAULT_RIG, seed: int = 10_000) -> dict:
    """Per-axis mean absolute picking-point error before and after correction.

    Evaluation cases use seeds disjoint from the training range by default.
    Returns a dict with 3-vectors under "pre_mae" and "post_mae".
    """
    pre = []
    post = []
    case_seed = seed
    budget = max(1, 100 * n_cases)
    while len(pre) < n_cases:
        if case_seed - seed >= 16 * budget:
            raise RuntimeError("evaluation cannot detect enough berries; "
                               "check detector and rig settings")
        case = _pipeline_case(scene_cfg, config, rig, case_seed)
        case_seed += 16
        if case is None:
            continue
        feats, pp_est, pp_true = case
        corrected = gpr.correct_picking_point(pp_est, model, feats)
        pre.append(np.abs(pp_est - pp_true))
        post.append(np.abs(corrected - pp_true))
    return {"pre_mae": np.mean(pre, axis=0), "post_mae": np.mean(post, axis=0)}
