"""Pinhole camera model and ground-plane projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class BehindCameraError(ValueError):
    pass


class DegenerateCameraError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, K) -> "Intrinsics":
        K = np.asarray(K, dtype=float)
        return cls(fx=K[0, 0], fy=K[1, 1], cx=K[0, 2], cy=K[1, 2])


@dataclass(frozen=True)
class Extrinsics:
    """World-to-camera transform ``x_cam = R @ x_world + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("det(R) must be +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @property
    def matrix(self) -> np.ndarray:
        """The 3x4 matrix ``[R | t]``."""
        return np.hstack([self.R, self.t[:, None]])

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t


@dataclass(frozen=True)
class CameraModel:
    intrinsics: Intrinsics
    extrinsics: Extrinsics
    image_width_px: int = 1920
    image_height_px: int = 1080
    name: str = field(default="", compare=False)

    @property
    def P(self) -> np.ndarray:
        return self.intrinsics.K @ self.extrinsics.matrix

    @property
    def P0(self) -> np.ndarray:
        """Ground-plane projection: ``P`` with its third column removed."""
        return self.P[:, [0, 1, 3]]

    def in_image(self, uv) -> np.ndarray:
        uv = np.atleast_2d(uv)
        return (
            (uv[:, 0] >= 0)
            & (uv[:, 0] < self.image_width_px)
            & (uv[:, 1] >= 0)
            & (uv[:, 1] < self.image_height_px)
        )


def look_at(
    intrinsics: Intrinsics,
    position,
    target,
    *,
    image_width_px: int = 1920,
    image_height_px: int = 1080,
    name: str = "",
) -> CameraModel:
    """Camera at ``position`` whose optical axis passes through ``target``.

    The image x axis stays parallel to the ground (no roll).
    """
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 0.0, 1.0])
    if np.linalg.norm(right) < 1e-12:
        raise DegenerateCameraError("optical axis is vertical; roll is undefined")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.vstack([right, down, forward])
    return CameraModel(
        intrinsics,
        Extrinsics(R, -R @ position),
        image_width_px=image_width_px,
        image_height_px=image_height_px,
        name=name,
    )


def mounted_camera(
    intrinsics: Intrinsics,
    x: float,
    y: float,
    yaw_deg: float,
    *,
    height_m: float = 4.0,
    pitch_deg: float = 30.0,
    **kwargs,
) -> CameraModel:
    """Camera at ``(x, y, height)`` heading ``yaw_deg`` (from +x, CCW), tilted down."""
    yaw = math.radians(yaw_deg)
    reach = height_m / math.tan(math.radians(pitch_deg))
    target = (x + reach * math.cos(yaw), y + reach * math.sin(yaw), 0.0)
    return look_at(intrinsics, (x, y, height_m), target, **kwargs)


def project(camera: CameraModel, world_points) -> np.ndarray:
    """Project 3-D world points (N x 3 or a single 3-vector) to pixels."""
    pts = np.asarray(world_points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    homog = np.hstack([pts, np.ones((len(pts), 1))]) @ camera.P.T
    if np.any(homog[:, 2] <= 0):
        raise BehindCameraError("point at zero or negative depth")
    uv = homog[:, :2] / homog[:, 2:3]
    return uv[0] if single else uv


def ground_depth(camera: CameraModel, ground_points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(ground_points, dtype=float))
    ext = camera.extrinsics
    return pts @ ext.R[2, :2] + ext.t[2]


def project_ground(camera: CameraModel, ground_points) -> np.ndarray:
    """Project ground-plane points ``(x, y)`` through ``P0``."""
    pts = np.asarray(ground_points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    P0 = camera.P0
    if np.linalg.cond(P0) > 1e12:
        raise DegenerateCameraError("ground-plane matrix is singular")
    homog = np.hstack([pts, np.ones((len(pts), 1))]) @ P0.T
    if np.any(homog[:, 2] <= 0):
        raise BehindCameraError("ground point at zero or negative depth")
    uv = homog[:, :2] / homog[:, 2:3]
    return uv[0] if single else uv


def backproject_ground(camera: CameraModel, image_points) -> np.ndarray:
    """Ground-plane coordinates of pixels via ``P0^-1``."""
    return apply_homography(np.linalg.inv(camera.P0), image_points)


def apply_homography(H, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    homog = np.hstack([pts, np.ones((len(pts), 1))]) @ np.asarray(H).T
    out = homog[:, :2] / homog[:, 2:3]
    return out[0] if single else out


def visible_mask(camera: CameraModel, ground_points) -> np.ndarray:
    """True where a ground point is in front of the camera and inside the image."""
    pts = np.atleast_2d(np.asarray(ground_points, dtype=float))
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    depth = ground_depth(camera, pts)
    front = depth > 1e-9
    out = np.zeros(len(pts), dtype=bool)
    if front.any():
        homog = np.hstack([pts[front], np.ones((front.sum(), 1))]) @ camera.P0.T
        uv = homog[:, :2] / homog[:, 2:3]
        out[front] = camera.in_image(uv)
    return out
