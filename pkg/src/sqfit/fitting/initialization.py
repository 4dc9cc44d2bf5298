"""Stage 1 (triangulation + combined depth) and stage 2 (PCA initialization)."""

from __future__ import annotations

import numpy as np

from ..camera import depth_prior, triangulate, world_bearing
from ..errors import DegenerateCloud, DegeneratePoint
from ..observation import ObservationSet
from ..polygon import centroid
from ..rotation import matrix_to_euler
from ..sq_core import SIZE_MIN, SuperquadricParams, radial_distance_gradient
from .costs import DepthSet, backprojected_points, world_rays

NEWTON_ITERATIONS = 50
GOLDEN_ITERATIONS = 80
_GR = (np.sqrt(5.0) - 1.0) / 2.0


def stage1_triangulation(obs: ObservationSet):
    """Triangulate the mask centroids; return ``(p_hat, combined DepthSet)``."""
    cents = [centroid(o.polygon) for o in obs.observations]
    p_hat = triangulate(cents, obs.views)
    depths = [depth_prior(pose, world_bearing(pose, obs.intrinsics, c), p_hat)
              for pose, c in zip(obs.poses, cents)]
    return p_hat, DepthSet("combined", depths)


def pca_shape(points: np.ndarray):
    """Principal axes and half-extents of a point cloud.

    Returns ``(R, a)`` where the columns of ``R`` are the principal directions
    (right-handed) and ``a`` the half ranges of the rotated cloud, floored at
    the minimum size.
    """
    n = len(points)
    A = points - points.mean(axis=0)
    _, sv, Vt = np.linalg.svd(A / np.sqrt(max(n - 1, 1)), full_matrices=False)
    if len(sv) < 3 or sv[2] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateCloud("back-projected cloud does not span three dimensions")
    V = Vt.T
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    S = A @ V
    a = np.maximum((S.max(axis=0) - S.min(axis=0)) / 2.0, SIZE_MIN)
    return V, a


def _radial_along_rays(xi, origins, rays, d):
    g, _, d_world = radial_distance_gradient(xi, origins + rays * d[:, None])
    return g, np.sum(d_world * rays, axis=1)


def _phi(xi, origins, rays, d):
    try:
        g, _ = _radial_along_rays(xi, origins, rays, d)
    except DegeneratePoint:
        # a point exactly at the center; evaluate pointwise
        g = np.array([_radial_along_rays(xi, origins[i:i + 1], rays[i:i + 1], d[i:i + 1])[0][0]
                      if np.linalg.norm(origins[i] + rays[i] * d[i] - xi.p) > 1e-12 else np.inf
                      for i in range(len(d))])
    return g * g


def optimize_sample_depths(xi: SuperquadricParams, origins, rays, d0) -> np.ndarray:
    """Per-ray depth minimizing the squared radial distance to ``xi``.

    Damped Gauss-Newton from ``d0``; rays that do not converge fall back to a
    golden-section search on ``[0.1 d0, 10 d0]`` and keep the better result.
    """
    d0 = np.asarray(d0, dtype=float)
    lo, hi = 0.1 * d0, 10.0 * d0
    d = d0.copy()
    phi = _phi(xi, origins, rays, d)
    damp = np.ones_like(d)
    converged = phi < 1e-20
    for _ in range(NEWTON_ITERATIONS):
        active = ~converged
        if not active.any():
            break
        ia = np.flatnonzero(active)
        g, gp = _radial_along_rays(xi, origins[ia], rays[ia], d[ia])
        step = -g * gp / (gp * gp + 1e-12) * damp[ia]
        d_new = np.clip(d[ia] + step, lo[ia], hi[ia])
        phi_new = _phi(xi, origins[ia], rays[ia], d_new)
        better = phi_new < phi[ia]
        moved = np.abs(d_new - d[ia])
        d[ia[better]] = d_new[better]
        phi[ia[better]] = phi_new[better]
        damp[ia[better]] = np.minimum(damp[ia[better]] * 2.0, 1.0)
        damp[ia[~better]] *= 0.5
        converged[ia] = (phi[ia] < 1e-20) | ((moved < 1e-12 * d[ia]) & better) | (damp[ia] < 1e-8)
    stuck = phi >= 1e-20
    if stuck.any():
        ia = np.flatnonzero(stuck)
        a, b = lo[ia].copy(), hi[ia].copy()
        o, r = origins[ia], rays[ia]
        c = b - _GR * (b - a)
        e = a + _GR * (b - a)
        fc, fe = _phi(xi, o, r, c), _phi(xi, o, r, e)
        for _ in range(GOLDEN_ITERATIONS):
            left = fc < fe
            b = np.where(left, e, b)
            a = np.where(left, a, c)
            c_new = b - _GR * (b - a)
            e_new = a + _GR * (b - a)
            # reuse the surviving interior point
            fe_next = np.where(left, fc, np.nan)
            fc_next = np.where(left, np.nan, fe)
            c, e = c_new, e_new
            need_c = np.isnan(fc_next)
            need_e = np.isnan(fe_next)
            fc = np.where(need_c, _phi(xi, o, r, c), fc_next)
            fe = np.where(need_e, _phi(xi, o, r, e), fe_next)
        dg = np.where(fc < fe, c, e)
        fg = np.minimum(fc, fe)
        take = fg < phi[ia]
        d[ia[take]] = dg[take]
    return d


def stage2_pca_init(obs: ObservationSet, depths: DepthSet, p_hat):
    """PCA-based size/orientation initialization of a quadric plus per-sample depths."""
    combined = depths.as_combined(obs.n_samples)
    pts = backprojected_points(obs, combined)
    R, a = pca_shape(pts)
    xi = SuperquadricParams(a=a, eps=(1.0, 1.0), p=p_hat, r=matrix_to_euler(R))
    origins, rays = world_rays(obs)
    d0 = np.concatenate(combined.per_sample(obs.n_samples))
    d = optimize_sample_depths(xi, origins, rays, d0)
    return xi, DepthSet("separate", d)
