"""Seeded trials that tie the scenario, channel, calibration, age and fusion models together."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .age import AgentAgeInputs, CycleConfig, aopt_cycle
from .calib.geometry import CameraModel
from .calib.pipeline import CalibrationReport, MatchGate, calibrate, select_reference
from .fusion import (
    MATCH_RADIUS_M,
    FeatureNoise,
    GroundWarp,
    ModaReport,
    PriorityMask,
    assign_masks,
    build_warps,
    detect_peaks,
    extract_features,
    fuse,
    moda,
    priority,
    random_masks,
)
from .channel import LinkParams, PathLossConfig, capacity, channel_gain_at
from .scenario import (
    DESCRIPTOR_SPREAD,
    Arena,
    ArrivalModel,
    FrameObservation,
    ScenarioTrace,
    default_fleet,
    generate,
    observe_frame,
    visible_count,
)

BITS_PER_KB = 8 * 1024


@dataclass(frozen=True)
class SceneParams:
    arrivals: ArrivalModel = ArrivalModel(1.6, math.log(30.0) - 0.125, 0.5)
    arena: Arena = Arena()
    duration_s: float = 120.0
    time_step_s: float = 0.5
    warmup_s: float = 120.0
    pixel_noise_px: float = 1.0
    descriptor_noise: float = 0.08
    descriptor_spread: float = DESCRIPTOR_SPREAD


@dataclass
class Scene:
    trace: ScenarioTrace
    cameras: list[CameraModel]
    params: SceneParams = field(default_factory=SceneParams)


def build_scene(seed: int, params: SceneParams = SceneParams(), cameras=None) -> Scene:
    trace = generate(
        params.arrivals, params.arena, params.duration_s, params.time_step_s, seed,
        warmup_s=params.warmup_s, descriptor_spread=params.descriptor_spread,
    )
    return Scene(trace, list(cameras) if cameras is not None else default_fleet(), params)


# --- calibration -------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationTrial:
    recal_index: int = 1
    reference_index: int | None = None
    budget_bits: float | None = 10 * BITS_PER_KB
    top_n: int = 5
    window_frames: int = 20
    frame_stride: int = 2
    calibration_interval_s: float = 0.0
    max_keypoints: int = 300
    gate_factor: float | None = 1.25


def observe_window(scene: Scene, camera: CameraModel, steps, rng: np.random.Generator) -> list[FrameObservation]:
    p = scene.params
    return [
        observe_frame(scene.trace, camera, int(k), rng, pixel_noise_px=p.pixel_noise_px, descriptor_noise=p.descriptor_noise)
        for k in steps
    ]


def run_calibration_trial(scene: Scene, trial: CalibrationTrial, rng: np.random.Generator) -> CalibrationReport:
    """Re-calibrate one camera against a reference.

    The re-calibrating camera captures its frames ``calibration_interval_s``
    after the reference did, so targets have moved by the time its image
    points are paired with the reference's world positions.
    """
    lag = int(round(trial.calibration_interval_s / scene.trace.time_step_s))
    span = (trial.window_frames - 1) * trial.frame_stride + lag
    last_start = scene.trace.n_steps - span
    if last_start < 0:
        raise ValueError("scene is too short for the calibration window")
    start = int(rng.integers(0, last_start + 1))
    ref_steps = start + trial.frame_stride * np.arange(trial.window_frames)

    # one noise stream per camera so that changing the lag or budget keeps the draws aligned
    cam_seeds = rng.integers(0, 2**63 - 1, size=len(scene.cameras))
    recal = scene.cameras[trial.recal_index]
    recal_obs = observe_window(scene, recal, ref_steps + lag, np.random.default_rng(cam_seeds[trial.recal_index]))

    # typical per-component noise for a target at mid range of the cameras
    gate = None if trial.gate_factor is None else MatchGate(1.5 * scene.params.descriptor_noise, trial.gate_factor)
    ref_index = trial.reference_index
    if ref_index is None:
        others = [i for i in range(len(scene.cameras)) if i != trial.recal_index]
        cands = [observe_window(scene, scene.cameras[i], ref_steps, np.random.default_rng(cam_seeds[i])) for i in others]
        pick = select_reference(cands, recal_obs, trial.budget_bits, gate or MatchGate(1.5 * scene.params.descriptor_noise),
                                max_keypoints=trial.max_keypoints)
        ref_index, ref_obs = others[pick], cands[pick]
    else:
        ref_obs = observe_window(scene, scene.cameras[ref_index], ref_steps, np.random.default_rng(cam_seeds[ref_index]))

    _, report = calibrate(
        recal.intrinsics,
        scene.cameras[ref_index],
        ref_obs,
        recal_obs,
        trial.budget_bits,
        trial.top_n,
        ground_truth=recal.extrinsics,
        max_keypoints=trial.max_keypoints,
        gate=gate,
    )
    return report


# --- age of perceived targets ------------------------------------------------------


@dataclass(frozen=True)
class AgeTrial:
    packet_bits: float = 20 * BITS_PER_KB
    sampling_interval_s: float = 0.5
    calibration_interval_s: float = 1.0
    calibration_prob: float = 0.1
    count_threshold: int = 1
    bandwidth_hz: float = 2e6
    tx_power_w: float = 0.1
    noise_psd_w_per_hz: float = 4e-21
    inference_delay_s: float = 0.073
    time_s: float = 30.0


def agent_links(scene: Scene, trial: AgeTrial, path_loss: PathLossConfig, rng: np.random.Generator,
                server_xy=(6.0, 18.0)) -> list[LinkParams]:
    """Per-camera links to an edge server, gains drawn from the path-loss model."""
    links = []
    for cam in scene.cameras:
        c = cam.extrinsics.center
        dist = max(math.hypot(c[0] - server_xy[0], c[1] - server_xy[1]), path_loss.reference_distance_m)
        gain = channel_gain_at(dist, path_loss, rng).gain
        links.append(LinkParams(trial.bandwidth_hz, trial.tx_power_w, trial.noise_psd_w_per_hz, gain, trial.inference_delay_s))
    return links


def age_inputs(scene: Scene, trial: AgeTrial, links, capacity_scale: float = 1.0) -> list[AgentAgeInputs]:
    """Per-agent age inputs at ``trial.time_s``; ``capacity_scale`` multiplies every link's capacity."""
    out = []
    for cam, link in zip(scene.cameras, links):
        c = capacity(link) * capacity_scale
        delay = trial.packet_bits / c + link.inference_delay_s
        out.append(AgentAgeInputs(trial.sampling_interval_s, delay, visible_count(scene.trace, cam, trial.time_s)))
    return out


def run_age_trial(scene: Scene, trial: AgeTrial, links, capacity_scale: float = 1.0):
    cfg = CycleConfig(trial.calibration_prob, trial.calibration_interval_s, trial.count_threshold)
    return aopt_cycle(age_inputs(scene, trial, links, capacity_scale), cfg)


# --- fusion ------------------------------------------------------------------------


@dataclass(frozen=True)
class FusionTrial:
    rate_bits: float = 20 * BITS_PER_KB
    loss_rate: float = 0.0
    frames: int = 3
    threshold: float = 0.5
    min_separation_cells: int = 20
    match_radius_m: float = MATCH_RADIUS_M


MaskPolicy = Callable[[Sequence[float], np.random.Generator], list]


def keep_views(indices) -> MaskPolicy:
    """Transmit only the listed views."""
    keep = set(int(i) for i in indices)
    return lambda pr, rng: [PriorityMask(float(p), int(i in keep)) for i, p in enumerate(pr)]


def priority_policy(loss_rate: float) -> MaskPolicy:
    return lambda pr, rng: assign_masks(pr, loss_rate)


def random_policy(loss_rate: float) -> MaskPolicy:
    return lambda pr, rng: random_masks(pr, loss_rate, rng)


def pooled(reports: Sequence[ModaReport]) -> ModaReport:
    """Sum counts over frames, so MODA is computed over the whole sequence."""
    return ModaReport(
        sum(r.true_positives for r in reports),
        sum(r.misses for r in reports),
        sum(r.false_positives for r in reports),
        sum(r.ground_truth_count for r in reports),
    )


def evaluate_fusion(
    scene: Scene,
    trial: FusionTrial,
    noise: FeatureNoise,
    policies: dict[str, MaskPolicy],
    rng: np.random.Generator,
    *,
    warps: Sequence[GroundWarp] | None = None,
) -> dict[str, ModaReport]:
    """Score every mask policy on the same sampled frames and feature maps.

    Features are drawn once per frame and shared by all policies; each
    policy gets its own random stream so adding one does not shift another.
    """
    arena = scene.trace.arena
    warps = warps if warps is not None else build_warps(scene.cameras, arena)
    steps = np.sort(rng.choice(scene.trace.n_steps, size=min(trial.frames, scene.trace.n_steps), replace=False))
    mask_seeds = rng.integers(0, 2**63 - 1, size=len(policies))
    mask_rngs = [np.random.default_rng(s) for s in mask_seeds]
    reports: dict[str, list[ModaReport]] = {name: [] for name in policies}
    for k in steps:
        t = float(k) * scene.trace.time_step_s
        feats = [
            extract_features(cam, scene.trace, t, trial.rate_bits, noise=noise, rng=rng, agent_id=i)
            for i, cam in enumerate(scene.cameras)
        ]
        pr = [priority(f) for f in feats]
        _, gt = scene.trace.at_step(int(k))
        for (name, policy), mrng in zip(policies.items(), mask_rngs):
            occ = fuse(feats, policy(pr, mrng), arena=arena, warps=warps)
            det = detect_peaks(occ, trial.threshold, trial.min_separation_cells)
            reports[name].append(moda(det.xy, gt, trial.match_radius_m))
    return {name: pooled(r) for name, r in reports.items()}


__all__ = [
    "AgeTrial",
    "BITS_PER_KB",
    "CalibrationTrial",
    "Scene",
    "SceneParams",
    "agent_links",
    "age_inputs",
    "FusionTrial",
    "build_scene",
    "evaluate_fusion",
    "keep_views",
    "pooled",
    "priority_policy",
    "random_policy",
    "observe_window",
    "run_age_trial",
    "run_calibration_trial",
]
