"""Pinhole cameras, rigid transforms, back-projection and linear triangulation.

Camera frame: z forward, x right, y down. A :class:`Pose` stores the camera
position and orientation in the world frame, so its transform maps
camera-frame points into the world.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import BehindCamera, DegenerateGeometry, InsufficientViews, NonPositiveDepth
from .rotation import euler_to_matrix, matrix_to_euler

FRONT_EPS = 1e-9
TRIANGULATION_RCOND = 1e-8


@dataclass(eq=False)
class CameraIntrinsics:
    f: np.ndarray = field(default_factory=lambda: np.array([400.0, 300.0]))
    kappa: np.ndarray = field(default_factory=lambda: np.array([320.0, 240.0]))
    resolution: tuple = (640, 480)

    def __post_init__(self):
        self.f = np.array(self.f, dtype=float).reshape(2)
        self.kappa = np.array(self.kappa, dtype=float).reshape(2)
        self.resolution = tuple(int(v) for v in self.resolution)
        if np.any(self.f <= 0):
            raise ValueError("focal lengths must be positive")


@dataclass(eq=False)
class Pose:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.p = np.array(self.p, dtype=float).reshape(3)
        self.r = np.array(self.r, dtype=float).reshape(3)

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.r)


@dataclass(eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))


def pose_to_transform(pose: Pose) -> RigidTransform:
    """Camera-to-world transform of ``pose``."""
    return RigidTransform(pose.rotation, pose.p.copy())


def look_at(position, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> Pose:
    """Pose at ``position`` whose optical axis passes through ``target``."""
    position = np.asarray(position, dtype=float)
    z = np.asarray(target, dtype=float) - position
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(position, matrix_to_euler(np.column_stack([x, y, z])))


def back_project(intr: CameraIntrinsics, s, d) -> np.ndarray:
    """Camera-frame point at z-depth ``d`` along the ray of pixel ``s``; broadcasts."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDepth("depth must be positive")
    return pixel_rays(intr, s) * d[..., None]


def pixel_rays(intr: CameraIntrinsics, s) -> np.ndarray:
    """Camera-frame rays with unit z-component (``back_project`` at d=1)."""
    s = np.asarray(s, dtype=float)
    return np.stack([(s[..., 0] - intr.kappa[0]) / intr.f[0],
                     (s[..., 1] - intr.kappa[1]) / intr.f[1],
                     np.ones(s.shape[:-1])], axis=-1)


def project(intr: CameraIntrinsics, t_cam) -> np.ndarray:
    t_cam = np.asarray(t_cam, dtype=float)
    z = t_cam[..., 2]
    if np.any(z <= FRONT_EPS):
        raise BehindCamera("point is not in front of the camera")
    return np.stack([intr.f[0] * t_cam[..., 0] / z + intr.kappa[0],
                     intr.f[1] * t_cam[..., 1] / z + intr.kappa[1]], axis=-1)


def world_to_camera(pose: Pose, t_world) -> np.ndarray:
    return (np.asarray(t_world, dtype=float) - pose.p) @ pose.rotation


def world_bearing(pose: Pose, intr: CameraIntrinsics, s) -> np.ndarray:
    """World-frame direction of pixel ``s`` scaled so its camera z-component is 1."""
    return pixel_rays(intr, s) @ pose.rotation.T


def triangulate(centroids, views) -> np.ndarray:
    """Linear multi-view triangulation of one point from pixel observations.

    ``views`` is a sequence of ``(Pose, CameraIntrinsics)``. Solves the stacked
    system ``[I, -v_i] x = p_Ci`` for the point and one depth per view with a
    Householder QR factorization.
    """
    P = len(views)
    if P < 2 or len(centroids) != P:
        raise InsufficientViews(f"need >= 2 views with matching centroids, got {P}")
    A = np.zeros((3 * P, 3 + P))
    b = np.zeros(3 * P)
    for i, ((pose, intr), c) in enumerate(zip(views, centroids)):
        v = world_bearing(pose, intr, np.asarray(c, dtype=float))
        A[3 * i:3 * i + 3, :3] = np.eye(3)
        A[3 * i:3 * i + 3, 3 + i] = -v
        b[3 * i:3 * i + 3] = pose.p
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < TRIANGULATION_RCOND * sv[0]:
        raise DegenerateGeometry("triangulation rays are nearly parallel")
    Q, R = np.linalg.qr(A)
    x = scipy.linalg.solve_triangular(R, Q.T @ b)
    return x[:3]


def depth_prior(view: Pose, bearing, sq_center) -> float:
    """Least-squares ``d`` solving ``p_C + d * v = center``."""
    v = np.asarray(bearing, dtype=float)
    rhs = np.asarray(sq_center, dtype=float) - view.p
    d, *_ = np.linalg.lstsq(v[:, None], rhs, rcond=None)
    return float(d[0])
