"""Ground-plane homography estimation and extrinsic pose recovery."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Extrinsics, Intrinsics, apply_homography


class RankDeficiencyError(ValueError):
    """Correspondences do not determine a unique homography."""


def normalization_transform(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(points - centroid, axis=1))
    if mean_dist < 1e-15:
        raise RankDeficiencyError("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def _has_collinear_triple(points: np.ndarray, tol: float = 1e-9) -> bool:
    scale = max(float(np.ptp(points, axis=0).max()), 1e-300)
    n = len(points)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = points[i], points[j], points[k]
                area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
                if abs(area) <= tol * scale * scale:
                    return True
    return False


def estimate_homography(world_xy, image_uv, min_n: int = 4) -> np.ndarray:
    """DLT estimate of ``H`` with ``image ~ H @ [x, y, 1]``.

    Both point sets are Hartley-normalised before the SVD solve. The result
    has unit Frobenius norm and ``H[2, 2] >= 0``.
    """
    world_xy = np.asarray(world_xy, dtype=float)
    image_uv = np.asarray(image_uv, dtype=float)
    if len(world_xy) != len(image_uv):
        raise ValueError("point sets differ in length")
    if len(world_xy) < min_n:
        raise RankDeficiencyError(f"need at least {min_n} correspondences, got {len(world_xy)}")
    if len(world_xy) == 4 and _has_collinear_triple(world_xy):
        raise RankDeficiencyError("three of the four world points are collinear")

    Tw = normalization_transform(world_xy)
    Ti = normalization_transform(image_uv)
    ones = np.ones((len(world_xy), 1))
    w = np.hstack([world_xy, ones]) @ Tw.T
    m = np.hstack([image_uv, ones]) @ Ti.T

    n = len(w)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:3] = w
    A[0::2, 6:9] = -m[:, 0:1] * w
    A[1::2, 3:6] = w
    A[1::2, 6:9] = -m[:, 1:2] * w
    _, sv, vt = np.linalg.svd(A)
    # the 8 constraints of a valid configuration leave a 1-D null space
    if sv[7] <= 1e-10 * sv[0]:
        raise RankDeficiencyError("degenerate correspondence configuration")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Ti) @ Hn @ Tw
    H /= np.linalg.norm(H)
    if H[2, 2] < 0:
        H = -H
    return H


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Closest rotation in Frobenius norm (polar projection, det fixed to +1)."""
    U, _, Vt = np.linalg.svd(M)
    D = np.eye(3)
    if np.linalg.det(U @ Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt
    return R


def recover_extrinsics(H, intrinsics: Intrinsics, ground_points=None) -> Extrinsics:
    """Pose ``[R | t]`` from a ground-plane homography and known intrinsics.

    The homography's overall sign is ambiguous. When ``ground_points`` are
    supplied the sign putting them in front of the camera is chosen,
    otherwise the world origin is assumed to have positive depth.
    """
    M = np.linalg.inv(intrinsics.K) @ np.asarray(H, dtype=float)
    n1 = np.linalg.norm(M[:, 0])
    if n1 < 1e-12 or np.linalg.norm(M[:, 1]) < 1e-12:
        raise RankDeficiencyError("homography column has near-zero norm")
    M = M / n1
    if ground_points is not None:
        pts = np.atleast_2d(np.asarray(ground_points, dtype=float))
        depth = pts @ M[2, :2] + M[2, 2]
        sign = 1.0 if np.median(depth) >= 0 else -1.0
    else:
        sign = 1.0 if M[2, 2] >= 0 else -1.0
    M = sign * M
    r1, r2, t = M[:, 0], M[:, 1], M[:, 2]
    r3 = np.cross(r1, r2)
    R = nearest_rotation(np.column_stack([r1, r2, r3]))
    # polar projection can only return a reflection for pathological input
    if np.linalg.det(R) < 0:
        R[:, 2] = -R[:, 2]
    # re-orthonormalise numerically so Extrinsics invariants hold to 1e-9
    R = nearest_rotation(R)
    return Extrinsics(R, t)


def extrinsic_error(recovered: Extrinsics, ground_truth: Extrinsics) -> float:
    """Relative Frobenius error of ``[R | t]`` in percent."""
    gt = ground_truth.matrix
    return float(np.linalg.norm(recovered.matrix - gt) / np.linalg.norm(gt) * 100.0)


def rotation_error_deg(recovered: Extrinsics, ground_truth: Extrinsics) -> float:
    """Geodesic angle between the two rotations."""
    # ||R1 - R2||_F = 2*sqrt(2)*sin(theta/2); stable for small angles
    chord = np.linalg.norm(recovered.R - ground_truth.R) / (2.0 * math.sqrt(2.0))
    return math.degrees(2.0 * math.asin(min(1.0, chord)))


def translation_error_m(recovered: Extrinsics, ground_truth: Extrinsics) -> float:
    return float(np.linalg.norm(recovered.t - ground_truth.t))


def reprojection_rms(H, world_xy, image_uv) -> float:
    pred = apply_homography(H, world_xy)
    return float(np.sqrt(np.mean(np.sum((pred - np.asarray(image_uv)) ** 2, axis=1))))
