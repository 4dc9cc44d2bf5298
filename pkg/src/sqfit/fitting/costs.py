"""Mask-fit cost functions: reprojection IOU (G1/G2) and radial-distance residuals (G4/G5)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import FRONT_EPS, back_project, pixel_rays
from ..errors import DegeneratePoint
from ..observation import DEFAULT_GRID, ObservationSet
from ..optim import ParameterVector, constraint_penalty
from .. import _kernels as _k
from ..sq_core import (
    N_PARAMS, SHAPE_MAX, SHAPE_MIN, SIZE_MIN, SuperquadricParams, radial_distance,
    radial_distance_gradient,
)

C_P_NUMERIC = 1.0
C_P_ANALYTIC = 100.0


def sq_bounds():
    lower = np.full(N_PARAMS, -np.inf)
    upper = np.full(N_PARAMS, np.inf)
    lower[0:3] = SIZE_MIN
    lower[3:5] = SHAPE_MIN
    upper[3:5] = SHAPE_MAX
    return lower, upper


@dataclass
class DepthSet:
    """Unknown depths: one per view (``combined``) or one per sample (``separate``)."""

    mode: str
    values: np.ndarray

    def __post_init__(self):
        if self.mode not in ("combined", "separate"):
            raise ValueError(f"unknown depth mode {self.mode!r}")
        self.values = np.array(self.values, dtype=float).ravel()

    def per_sample(self, n_samples: list) -> list:
        """Depth array for every view's samples."""
        if self.mode == "combined":
            if len(self.values) != len(n_samples):
                raise ValueError("combined depth count must equal view count")
            return [np.full(n, d) for n, d in zip(n_samples, self.values)]
        if len(self.values) != sum(n_samples):
            raise ValueError("separate depth count must equal sample count")
        return np.split(self.values, np.cumsum(n_samples)[:-1])

    def as_separate(self, n_samples: list) -> "DepthSet":
        return DepthSet("separate", np.concatenate(self.per_sample(n_samples)))

    def as_combined(self, n_samples: list) -> "DepthSet":
        if self.mode == "combined":
            return DepthSet("combined", self.values.copy())
        return DepthSet("combined", [d.mean() for d in self.per_sample(n_samples)])

    def to_dict(self) -> dict:
        return {"mode": self.mode, "values": self.values.tolist()}


def view_ious(xi: SuperquadricParams, obs: ObservationSet, grid=DEFAULT_GRID,
              use_sample_hull: bool = True) -> np.ndarray:
    """Per-view IOU between the silhouette of ``xi`` and each mask polygon.

    A view in which ``xi`` is not entirely in front of the camera scores 0.
    """
    packed = _packed_views(obs, use_sample_hull)
    return _k.sq_view_ious(xi.a, xi.eps, xi.rotation, xi.p, *packed[:4], grid[0], grid[1],
                           *packed[4:], FRONT_EPS)


def _packed_views(obs: ObservationSet, use_sample_hull: bool):
    """Camera and target-polygon arrays for the compiled IOU kernel, cached per set."""
    key = "_packed_hull" if use_sample_hull else "_packed_poly"
    packed = getattr(obs, key, None)
    if packed is None:
        polys = [o.sample_hull if use_sample_hull else o.polygon for o in obs.observations]
        counts = np.array([len(pg) for pg in polys], dtype=np.int64)
        targets = np.zeros((len(polys), counts.max(), 2))
        for i, pg in enumerate(polys):
            targets[i, :len(pg)] = pg.vertices
        packed = (np.stack([pose.rotation for pose in obs.poses]),
                  np.stack([pose.p for pose in obs.poses]),
                  obs.intrinsics.f, obs.intrinsics.kappa, targets, counts)
        setattr(obs, key, packed)
    return packed


def cost_g1(xi: SuperquadricParams, obs: ObservationSet, grid=DEFAULT_GRID) -> float:
    """One minus the mean reprojection IOU against the per-view sample hulls."""
    return float(1.0 - view_ious(xi, obs, grid).mean())


def cost_g2(xi: SuperquadricParams, obs: ObservationSet, c_p: float = C_P_NUMERIC,
            grid=DEFAULT_GRID) -> float:
    lower, upper = sq_bounds()
    pen = constraint_penalty(ParameterVector(xi.to_vector(), lower=lower, upper=upper), c_p)
    return cost_g1(xi, obs, grid) + pen


def world_rays(obs: ObservationSet):
    """Per-sample camera origins and world rays with unit camera-z component."""
    origins, rays = [], []
    for pose, o in zip(obs.poses, obs.observations):
        rays.append(pixel_rays(obs.intrinsics, o.samples) @ pose.rotation.T)
        origins.append(np.broadcast_to(pose.p, (len(o.samples), 3)))
    return np.concatenate(origins), np.concatenate(rays)


def backprojected_points(obs: ObservationSet, depths: DepthSet) -> np.ndarray:
    """World points of all samples at the given depths, view-major order."""
    pts = []
    for pose, o, d in zip(obs.poses, obs.observations, depths.per_sample(obs.n_samples)):
        pts.append(back_project(obs.intrinsics, o.samples, d) @ pose.rotation.T + pose.p)
    return np.concatenate(pts)


def residuals_g4(xi: SuperquadricParams, obs: ObservationSet, depths: DepthSet) -> np.ndarray:
    """Radial distance of every back-projected sample, length ``sum(N)``."""
    origins, rays = world_rays(obs)
    d = np.concatenate(depths.per_sample(obs.n_samples))
    world = origins + rays * d[:, None]
    return radial_distance(xi, (world - xi.p) @ xi.rotation)


def residuals_g5(xi: SuperquadricParams, obs: ObservationSet, depths: DepthSet) -> np.ndarray:
    """G4 scaled by ``a_x a_y a_z + 1`` to favour the smallest consistent body."""
    return (xi.volume_term + 1.0) * residuals_g4(xi, obs, depths)


class RadialProblem:
    """G4/G5 residuals and analytic Jacobian over the stacked vector ``[xi, depths]``."""

    def __init__(self, obs: ObservationSet, depth_mode: str, scaled: bool = True):
        self.obs = obs
        self.mode = depth_mode
        self.scaled = scaled
        self.origins, self.rays = world_rays(obs)
        counts = obs.n_samples
        self.view_of_sample = np.repeat(np.arange(len(counts)), counts)
        self.n_res = int(sum(counts))
        self.n_depth = len(counts) if depth_mode == "combined" else self.n_res

    def split(self, x):
        xi = SuperquadricParams.from_vector(x[:N_PARAMS])
        d = x[N_PARAMS:]
        if self.mode == "combined":
            d = d[self.view_of_sample]
        return xi, d

    def residuals(self, x) -> np.ndarray:
        xi, d = self.split(x)
        world = self.origins + self.rays * d[:, None]
        try:
            # far-out-of-bounds shape probes overflow; the optimizer rejects non-finite steps
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                r = radial_distance(xi, (world - xi.p) @ xi.rotation)
        except DegeneratePoint:
            return np.full(self.n_res, np.nan)
        if self.scaled:
            r = (xi.volume_term + 1.0) * r
        return r

    def jacobian(self, x) -> np.ndarray:
        xi, d = self.split(x)
        world = self.origins + self.rays * d[:, None]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            g, d_xi, d_world = radial_distance_gradient(xi, world)
        J = np.zeros((self.n_res, N_PARAMS + self.n_depth))
        dd = np.sum(d_world * self.rays, axis=1)
        if self.scaled:
            s = xi.volume_term + 1.0
            a = xi.a
            J[:, :N_PARAMS] = s * d_xi
            J[:, 0] += g * a[1] * a[2]
            J[:, 1] += g * a[0] * a[2]
            J[:, 2] += g * a[0] * a[1]
            dd = s * dd
        else:
            J[:, :N_PARAMS] = d_xi
        rows = np.arange(self.n_res)
        if self.mode == "combined":
            J[rows, N_PARAMS + self.view_of_sample] = dd
        else:
            J[rows, N_PARAMS + rows] = dd
        return J
