"""Silhouettes and mask observations of a superquadric seen by pinhole cameras."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, FRONT_EPS, Pose, project, world_to_camera
from .errors import BehindCamera
from .polygon import ConvexPolygon, convex_hull, sample_interior
from .sq_core import SuperquadricParams, sample_surface_grid

DEFAULT_GRID = (64, 64)
SAMPLES_PER_OBSERVATION = 100


@dataclass(eq=False)
class MaskObservation:
    view_id: int
    polygon: ConvexPolygon
    samples: np.ndarray  # (N, 2) pixels

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 2)
        self._hull = None

    @property
    def sample_hull(self) -> ConvexPolygon:
        """Convex hull of the samples, the numeric-cost stand-in for the mask."""
        if self._hull is None:
            self._hull = convex_hull(self.samples)
        return self._hull


@dataclass(eq=False)
class ObservationSet:
    observations: list
    poses: list
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        if len(self.observations) != len(self.poses):
            raise ValueError("one observation per pose required")

    def __len__(self):
        return len(self.poses)

    @property
    def views(self) -> list:
        return [(pose, self.intrinsics) for pose in self.poses]

    @property
    def n_samples(self) -> list:
        return [len(o.samples) for o in self.observations]


def project_points(points_world: np.ndarray, view: Pose, intr: CameraIntrinsics) -> np.ndarray:
    t_cam = world_to_camera(view, points_world)
    if np.any(t_cam[:, 2] <= FRONT_EPS):
        raise BehindCamera("superquadric is not entirely in front of the camera")
    return project(intr, t_cam)


def silhouette_from_grid(grid_world: np.ndarray, view: Pose, intr: CameraIntrinsics) -> ConvexPolygon:
    return convex_hull(project_points(grid_world, view, intr))


def silhouette(params: SuperquadricParams, view: Pose, intr: CameraIntrinsics,
               grid=DEFAULT_GRID) -> ConvexPolygon:
    """Convex hull of the projected surface grid of ``params``."""
    return silhouette_from_grid(sample_surface_grid(params, *grid), view, intr)


def make_observation(params: SuperquadricParams, view: Pose, intr: CameraIntrinsics,
                     n_samples: int = SAMPLES_PER_OBSERVATION, seed=None,
                     view_id: int = 0, grid=DEFAULT_GRID) -> MaskObservation:
    poly = silhouette(params, view, intr, grid)
    return MaskObservation(view_id, poly, sample_interior(poly, n_samples, seed))
