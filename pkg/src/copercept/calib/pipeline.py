"""End-to-end extrinsic self-calibration against a reference camera.

The reference camera knows its pose. It transmits the descriptors of its
detections over a window of frames, quantized to fit the channel budget.
The camera being re-calibrated matches them frame by frame against its own
detections, keeps the ``top_n`` closest pairs per frame, and pairs its image
points with the world positions the reference obtains by back-projecting its
own detections through ``P0^-1``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .geometry import CameraModel, Extrinsics, Intrinsics, backproject_ground
from .matching import DESCRIPTOR_RANGE, QuantizationPlan, match_keypoints, plan_quantization, quantize
from .solver import (
    RankDeficiencyError,
    estimate_homography,
    extrinsic_error,
    recover_extrinsics,
    reprojection_rms,
    rotation_error_deg,
    translation_error_m,
)

if TYPE_CHECKING:
    from ..scenario import FrameObservation

MAX_TRANSMITTED_KEYPOINTS = 256


class CalibrationInfeasibleError(ValueError):
    """Too few usable correspondences to solve for the pose."""


@dataclass(frozen=True)
class Correspondence:
    image_point: tuple[float, float]
    world_point: tuple[float, float]
    match_distance: float

    def __post_init__(self):
        if not np.all(np.isfinite([*self.image_point, *self.world_point, self.match_distance])):
            raise ValueError("correspondence coordinates must be finite")


@dataclass(frozen=True)
class CalibrationReport:
    n_correspondences: int
    bits_per_component: int | None
    transmitted_keypoints: int
    cost_bits: int
    reprojection_rms_px: float
    shortfall: bool
    extrinsic_error_pct: float | None = None
    rotation_error_deg: float | None = None
    translation_error_m: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def transmitted_window(observations: Sequence[FrameObservation], max_keypoints: int = MAX_TRANSMITTED_KEYPOINTS):
    """Leading frames whose detections fit under ``max_keypoints`` (always at least one frame)."""
    kept, total = [], 0
    for obs in observations:
        if kept and total + len(obs) > max_keypoints:
            break
        kept.append(obs)
        total += len(obs)
    return kept, total


def _plan(dim: int, n_keypoints: int, budget_bits: float | None):
    if budget_bits is None:
        return None
    return plan_quantization(dim, max(n_keypoints, 1), budget_bits)


@dataclass(frozen=True)
class MatchGate:
    """Largest descriptor distance accepted as a match.

    The limit is ``factor`` times the expected distance between two views of
    one target with per-component noise ``noise_sigma``, plus the error of
    whatever quantizer the budget allows.
    """

    noise_sigma: float
    factor: float = 1.25

    def limit(self, dim: int, bits: int | None) -> float:
        return self.factor * typical_match_distance(dim, self.noise_sigma, bits)


def typical_match_distance(dim: int, noise_sigma: float, bits: int | None = None, value_range=DESCRIPTOR_RANGE) -> float:
    """Expected distance between two noisy views of one descriptor, one side quantized to ``bits``."""
    var = 2.0 * noise_sigma**2
    if bits is not None:
        step = (value_range[1] - value_range[0]) / 2**bits
        var += step**2 / 12.0
    return float(np.sqrt(dim * var))


def _frame_matches(reference_observations, recal_observations, budget_bits, gate, max_keypoints):
    """Yield ``(ref, rec, pairs, distances)`` per usable frame, sorted and gated, plus the plan."""
    window, n_tx = transmitted_window(reference_observations, max_keypoints)
    dim = next((o.descriptors.shape[1] for o in window if len(o)), 1)
    plan = _plan(dim, n_tx, budget_bits)
    bits = None if plan is None else plan.bits_per_component
    limit = np.inf if gate is None else gate.limit(dim, bits)
    frames = []
    for ref, rec in zip(window, recal_observations):
        if len(ref) == 0 or len(rec) == 0:
            continue
        result = match_keypoints(quantize(ref.descriptors, bits), rec.descriptors, min(len(ref), len(rec)))
        keep = result.distances <= limit
        frames.append((ref, rec, result.pairs[keep], result.distances[keep]))
    return frames, plan, n_tx


def build_correspondences(
    reference_camera: CameraModel,
    reference_observations: Sequence[FrameObservation],
    recal_observations: Sequence[FrameObservation],
    budget_bits: float | None,
    top_n: int,
    *,
    max_keypoints: int = MAX_TRANSMITTED_KEYPOINTS,
    gate: MatchGate | None = None,
) -> tuple[list[Correspondence], QuantizationPlan | None, bool, int]:
    """Quantize, match and pair reference world points with re-calibration image points.

    Frame ``i`` of the reference is matched against frame ``i`` of the
    re-calibration view. ``budget_bits=None`` sends unquantized descriptors.
    Pairs rejected by ``gate`` are dropped before the ``top_n`` cut, so
    targets seen by only one camera are not forced into a match. Returns the
    correspondences, the quantization plan, whether any frame fell short of
    ``top_n`` pairs, and the number of transmitted key points.
    """
    frames, plan, n_tx = _frame_matches(reference_observations, recal_observations, budget_bits, gate, max_keypoints)
    corrs: list[Correspondence] = []
    shortfall = False
    for ref, rec, pairs, dists in frames:
        pairs, dists = pairs[:top_n], dists[:top_n]
        shortfall |= len(dists) < top_n
        world = backproject_ground(reference_camera, ref.image_uv[pairs[:, 0]])
        image = rec.image_uv[pairs[:, 1]]
        for w, m, d in zip(world, image, dists):
            corrs.append(Correspondence((float(m[0]), float(m[1])), (float(w[0]), float(w[1])), float(d)))
    return corrs, plan, shortfall, n_tx


def calibrate(
    intrinsics: Intrinsics,
    reference_camera: CameraModel,
    reference_observations: Sequence[FrameObservation],
    recal_observations: Sequence[FrameObservation],
    budget_bits: float | None,
    top_n: int = 5,
    *,
    ground_truth: Extrinsics | None = None,
    max_keypoints: int = MAX_TRANSMITTED_KEYPOINTS,
    gate: MatchGate | None = None,
) -> tuple[Extrinsics, CalibrationReport]:
    """Recover the pose of a camera from matches against a reference camera.

    Raises :class:`~copercept.calib.matching.BudgetError` when the budget
    cannot carry one bit per component, and :class:`CalibrationInfeasibleError`
    when fewer than four usable correspondences remain.
    """
    corrs, plan, shortfall, n_tx = build_correspondences(
        reference_camera, reference_observations, recal_observations, budget_bits, top_n,
        max_keypoints=max_keypoints, gate=gate,
    )
    if len(corrs) < 4:
        raise CalibrationInfeasibleError(f"only {len(corrs)} correspondences, need 4")
    world = np.array([c.world_point for c in corrs])
    image = np.array([c.image_point for c in corrs])
    try:
        H = estimate_homography(world, image)
        ext = recover_extrinsics(H, intrinsics, ground_points=world)
    except RankDeficiencyError as exc:
        raise CalibrationInfeasibleError(str(exc)) from exc

    dim = reference_observations[0].descriptors.shape[1] if reference_observations else 0
    errors = {}
    if ground_truth is not None:
        errors = {
            "extrinsic_error_pct": extrinsic_error(ext, ground_truth),
            "rotation_error_deg": rotation_error_deg(ext, ground_truth),
            "translation_error_m": translation_error_m(ext, ground_truth),
        }
    report = CalibrationReport(
        n_correspondences=len(corrs),
        bits_per_component=None if plan is None else plan.bits_per_component,
        transmitted_keypoints=n_tx,
        cost_bits=plan.total_cost_bits if plan is not None else 64 * dim * n_tx,
        reprojection_rms_px=reprojection_rms(H, world, image),
        shortfall=bool(shortfall),
        **errors,
    )
    return ext, report


def count_confident_matches(
    reference_observations: Sequence[FrameObservation],
    recal_observations: Sequence[FrameObservation],
    budget_bits: float | None,
    gate: MatchGate,
    *,
    max_keypoints: int = MAX_TRANSMITTED_KEYPOINTS,
) -> int:
    """Number of one-to-one matches accepted by ``gate`` over the window."""
    frames, _, _ = _frame_matches(reference_observations, recal_observations, budget_bits, gate, max_keypoints)
    return sum(len(d) for *_, d in frames)


def select_reference(
    candidates: Sequence[Sequence[FrameObservation]],
    recal_observations: Sequence[FrameObservation],
    budget_bits: float | None,
    gate: MatchGate,
    *,
    max_keypoints: int = MAX_TRANSMITTED_KEYPOINTS,
) -> int:
    """Index of the candidate reference with the most confident matches (lowest index on ties)."""
    if not candidates:
        raise ValueError("need at least one candidate reference")
    counts = [
        count_confident_matches(c, recal_observations, budget_bits, gate, max_keypoints=max_keypoints)
        for c in candidates
    ]
    return int(np.argmax(counts))


def correspondences_to_csv(corrs: Sequence[Correspondence]) -> str:
    """CSV with header ``u,v,x,y,match_distance``; floats use ``repr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "v", "x", "y", "match_distance"])
    for c in corrs:
        w.writerow([repr(c.image_point[0]), repr(c.image_point[1]), repr(c.world_point[0]),
                    repr(c.world_point[1]), repr(c.match_distance)])
    return buf.getvalue()


def correspondences_from_csv(text: str) -> list[Correspondence]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        Correspondence((float(r["u"]), float(r["v"])), (float(r["x"]), float(r["y"])), float(r["match_distance"]))
        for r in rows
    ]


__all__ = [
    "CalibrationInfeasibleError",
    "CalibrationReport",
    "MatchGate",
    "Correspondence",
    "build_correspondences",
    "calibrate",
    "correspondences_from_csv",
    "correspondences_to_csv",
    "count_confident_matches",
    "select_reference",
    "transmitted_window",
    "typical_match_distance",
]
