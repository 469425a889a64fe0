"""Priority-aware multi-view fusion on the ground plane.

Each camera produces a feature map standing in for a learned encoder: a
detection heat-map with Gaussian bumps at the targets' foot pixels plus noise
whose level falls with the streaming rate. Views are ranked by their mean
activation, the anticipated packet losses are assigned to the weakest views,
and the surviving maps are warped onto the arena grid and averaged.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from .calib.geometry import CameraModel, visible_mask
from .scenario import Arena, ScenarioTrace
from .sched import AccuracyProxy

FEATURE_STRIDE = 8
MATCH_RADIUS_M = 0.5


@dataclass(frozen=True)
class FeatureMap:
    agent_id: int
    time_index: int
    values: np.ndarray  # (C, H, W)

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("feature values must be (C, H, W)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")


@dataclass(frozen=True)
class PriorityMask:
    priority: float
    mask: int


@dataclass(frozen=True)
class OccupancyMap:
    """Scores on the arena grid, rows along the arena length and columns along its width."""

    values: np.ndarray
    arena: Arena
    empty: bool = False

    def cell_centers(self, rows, cols) -> np.ndarray:
        c = self.arena.cell_m
        return np.column_stack([(np.asarray(cols) + 0.5) * c, (np.asarray(rows) + 0.5) * c])


@dataclass(frozen=True)
class ModaReport:
    true_positives: int
    misses: int
    false_positives: int
    ground_truth_count: int

    @property
    def moda_percent(self) -> float:
        return (1.0 - (self.misses + self.false_positives) / max(1, self.ground_truth_count)) * 100.0


@dataclass(frozen=True)
class FeatureNoise:
    """Noise level ``floor + span * deficiency(rate)`` with the deficiency from a rate proxy."""

    proxy: AccuracyProxy
    floor: float = 0.05
    span: float = 1.5

    def sigma(self, rate_bits: float) -> float:
        if np.isinf(rate_bits):
            return self.floor
        return float(self.floor + self.span * self.proxy.deficiency(rate_bits))


def feature_shape(camera: CameraModel, stride: int = FEATURE_STRIDE) -> tuple[int, int]:
    return camera.image_height_px // stride, camera.image_width_px // stride


def extract_features(
    camera: CameraModel,
    trace: ScenarioTrace,
    t: float,
    rate_bits: float,
    *,
    noise: FeatureNoise,
    rng: np.random.Generator,
    agent_id: int = 0,
    stride: int = FEATURE_STRIDE,
    bump_sigma_cells: float = 1.0,
) -> FeatureMap:
    """Single-channel heat-map with a unit bump per visible target, noisy and clipped to [0, 1]."""
    h, w = feature_shape(camera, stride)
    k = trace.step_of(t)
    _, xy = trace.at_step(k)
    heat = np.zeros((h, w))
    if len(xy):
        vis = visible_mask(camera, xy)
        if vis.any():
            pts = np.hstack([xy[vis], np.ones((vis.sum(), 1))]) @ camera.P0.T
            uv = pts[:, :2] / pts[:, 2:3] / stride - 0.5
            # bumps are evaluated inside a 6-sigma window; beyond it they fall below 1e-7
            reach = int(np.ceil(6.0 * bump_sigma_cells))
            for u, v in uv:
                r0, r1 = max(int(v) - reach, 0), min(int(v) + reach + 2, h)
                c0, c1 = max(int(u) - reach, 0), min(int(u) + reach + 2, w)
                if r0 >= r1 or c0 >= c1:
                    continue
                rows = np.arange(r0, r1)[:, None]
                cols = np.arange(c0, c1)[None, :]
                bump = np.exp(-((cols - u) ** 2 + (rows - v) ** 2) / (2.0 * bump_sigma_cells**2))
                np.maximum(heat[r0:r1, c0:c1], bump, out=heat[r0:r1, c0:c1])
    sigma = noise.sigma(rate_bits)
    values = np.clip(heat + sigma * rng.standard_normal((h, w)), 0.0, 1.0)
    return FeatureMap(agent_id, k, values[None])


def priority(feature: FeatureMap) -> float:
    """Average-pooled activation over all channels and positions."""
    return float(np.mean(feature.values))


def mask_count(n_views: int, loss_rate: float) -> int:
    if not 0.0 <= loss_rate <= 1.0:
        raise ValueError("loss_rate must lie in [0, 1]")
    return min(n_views, int(np.floor(loss_rate * n_views + 0.5)))


def assign_masks(priorities: Sequence[float], loss_rate: float) -> list[PriorityMask]:
    """Mask the ``round(r * K)`` lowest-priority views; ties go to the lower index."""
    p = np.asarray(priorities, dtype=float)
    n_drop = mask_count(len(p), loss_rate)
    order = np.lexsort((np.arange(len(p)), p))
    masks = np.ones(len(p), dtype=int)
    masks[order[:n_drop]] = 0
    return [PriorityMask(float(pi), int(m)) for pi, m in zip(p, masks)]


def random_masks(priorities: Sequence[float], loss_rate: float, rng: np.random.Generator) -> list[PriorityMask]:
    """Baseline: the same number of masked views, chosen uniformly at random."""
    n = len(priorities)
    drop = rng.choice(n, size=mask_count(n, loss_rate), replace=False)
    masks = np.ones(n, dtype=int)
    masks[drop] = 0
    return [PriorityMask(float(pi), int(m)) for pi, m in zip(priorities, masks)]


def loss_penalty(masks: Sequence[PriorityMask], alpha_d: float = 1.0) -> float:
    """Diagnostic ``alpha_d * sum(1 - m)`` over the views."""
    return alpha_d * float(sum(1 - m.mask for m in masks))


class GroundWarp:
    """Precomputed bilinear sampling of one camera's feature map at every arena cell it sees."""

    def __init__(self, camera: CameraModel, arena: Arena, stride: int = FEATURE_STRIDE):
        h, w = feature_shape(camera, stride)
        c = arena.cell_m
        xs = (np.arange(arena.grid_w) + 0.5) * c
        ys = (np.arange(arena.grid_h) + 0.5) * c
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel(), np.ones(gx.size)]) @ camera.P0.T
        with np.errstate(divide="ignore", invalid="ignore"):
            u = pts[:, 0] / pts[:, 2] / stride - 0.5
            v = pts[:, 1] / pts[:, 2] / stride - 0.5
        ok = (pts[:, 2] > 0) & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
        self.cells = np.flatnonzero(ok)
        u, v = u[ok], v[ok]
        u0 = np.minimum(np.floor(u).astype(int), w - 2)
        v0 = np.minimum(np.floor(v).astype(int), h - 2)
        fu, fv = u - u0, v - v0
        base = v0 * w + u0
        self.index = np.stack([base, base + 1, base + w, base + w + 1])
        self.weight = np.stack([(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv])
        self.shape = (arena.grid_h, arena.grid_w)

    def apply(self, feature: FeatureMap) -> np.ndarray:
        """Channel-averaged feature sampled at the visible cells."""
        flat = feature.values.mean(axis=0).ravel()
        return (flat[self.index] * self.weight).sum(axis=0)


def build_warps(cameras: Sequence[CameraModel], arena: Arena, stride: int = FEATURE_STRIDE) -> list[GroundWarp]:
    return [GroundWarp(cam, arena, stride) for cam in cameras]


def fuse(
    features: Sequence[FeatureMap],
    masks: Sequence[PriorityMask],
    cameras: Sequence[CameraModel] | None = None,
    *,
    arena: Arena | None = None,
    warps: Sequence[GroundWarp] | None = None,
) -> OccupancyMap:
    """Average the unmasked warped maps over the cameras that see each cell.

    Cells seen by no unmasked camera score 0. Pass ``warps`` to reuse the
    per-camera sampling tables across time steps.
    """
    arena = arena or Arena()
    if warps is None:
        if cameras is None:
            raise ValueError("need cameras or precomputed warps")
        warps = build_warps(cameras, arena)
    if not (len(features) == len(masks) == len(warps)):
        raise ValueError("features, masks and cameras differ in length")
    total = np.zeros(arena.grid_h * arena.grid_w)
    count = np.zeros_like(total)
    for f, m, wp in zip(features, masks, warps):
        if m.mask:
            total[wp.cells] += wp.apply(f)
            count[wp.cells] += 1.0
    empty = not any(m.mask for m in masks)
    out = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return OccupancyMap(out.reshape(arena.grid_h, arena.grid_w), arena, empty)


@dataclass(frozen=True)
class Detections:
    rows: np.ndarray
    cols: np.ndarray
    scores: np.ndarray
    xy: np.ndarray

    def __len__(self):
        return len(self.scores)


def detect_peaks(occupancy: OccupancyMap, threshold: float = 0.5, min_separation_cells: int = 20) -> Detections:
    """Local maxima above ``threshold`` with greedy suppression closer than ``min_separation_cells``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    m = occupancy.values
    size = 2 * max(int(min_separation_cells), 0) + 1
    peak = (m == maximum_filter(m, size=size, mode="constant", cval=-np.inf)) & (m >= threshold)
    rows, cols = np.nonzero(peak)
    scores = m[rows, cols]
    order = np.lexsort((cols, rows, -scores))
    kept: list[int] = []
    sep2 = float(min_separation_cells) ** 2
    for i in order:
        if all((rows[i] - rows[j]) ** 2 + (cols[i] - cols[j]) ** 2 >= sep2 for j in kept):
            kept.append(i)
    kept_arr = np.array(kept, dtype=int)
    r, c = rows[kept_arr], cols[kept_arr]
    return Detections(r, c, scores[kept_arr], occupancy.cell_centers(r, c).reshape(-1, 2))


def moda(detections_xy, ground_truth_xy, match_radius_m: float = MATCH_RADIUS_M) -> ModaReport:
    """Greedy nearest-pair matching within ``match_radius_m``."""
    if match_radius_m <= 0:
        raise ValueError("match radius must be positive")
    det = np.asarray(detections_xy, dtype=float).reshape(-1, 2)
    gt = np.asarray(ground_truth_xy, dtype=float).reshape(-1, 2)
    if len(det) == 0 or len(gt) == 0:
        return ModaReport(0, len(gt), len(det), len(gt))
    d = np.linalg.norm(det[:, None, :] - gt[None, :, :], axis=2)
    i, j = np.nonzero(d <= match_radius_m)
    order = np.lexsort((j, i, d[i, j]))
    used_d, used_g = set(), set()
    for k in order:
        if i[k] not in used_d and j[k] not in used_g:
            used_d.add(i[k])
            used_g.add(j[k])
    tp = len(used_d)
    return ModaReport(tp, len(gt) - tp, len(det) - tp, len(gt))


def write_pgm(occupancy: OccupancyMap) -> bytes:
    """Binary 8-bit portable graymap of the scores (0 to 255)."""
    img = np.clip(np.round(occupancy.values * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    header, _, rest = data.partition(b"\n255\n")
    _, dims = header.split(b"\n")
    w, h = (int(x) for x in dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w) / 255.0


def detections_to_csv(det: Detections, time_index: int = 0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "y", "score"])
    for (x, y), s in zip(det.xy, det.scores):
        w.writerow([time_index, repr(float(x)), repr(float(y)), repr(float(s))])
    return buf.getvalue()
