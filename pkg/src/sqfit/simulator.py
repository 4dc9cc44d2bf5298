"""Synthetic ground-truth scenes: random superquadrics seen by a ring of pinhole cameras."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, Pose, look_at, world_bearing
from .errors import BehindCamera, DegenerateInput, ExhaustedRejection, SceneParseError
from .observation import DEFAULT_GRID, MaskObservation, ObservationSet, silhouette
from .polygon import ConvexPolygon, sample_interior
from .sq_core import SuperquadricParams, implicit_value, world_to_sq

MAX_REDRAWS = 10_000
EXTREME_SHAPE = ((0.1, 0.15), (1.85, 1.9))


@dataclass
class SceneConfig:
    camera_count: int = 3
    circle_radius: float = 10.0
    elevation: float = 0.0  # radians above the z=0 plane
    focal: tuple = (400.0, 300.0)
    principal_point: tuple = (320.0, 240.0)
    resolution: tuple = (640, 480)
    size_range: tuple = (0.1, 5.0)
    position_range: tuple = (-5.0, 5.0)
    orientation_range: tuple = (-np.pi, np.pi)
    shape_range: tuple = (0.1, 1.9)
    samples_per_observation: int = 100
    extreme_shapes: bool = False  # require eps1 or eps2 in EXTREME_SHAPE
    silhouette_grid: tuple = DEFAULT_GRID

    def __post_init__(self):
        if self.camera_count < 2 or self.circle_radius <= 0:
            raise ValueError("need >= 2 cameras on a positive radius")
        if self.circle_radius <= max(abs(v) for v in self.position_range):
            raise ValueError("camera circle must enclose the position range")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.principal_point, self.resolution)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scene config keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(eq=False)
class Scene:
    gt: SuperquadricParams
    observations: ObservationSet

    @property
    def views(self) -> list:
        return self.observations.views


def camera_ring(count: int, radius: float, intrinsics: CameraIntrinsics | None = None,
                elevation: float = 0.0) -> list:
    """``count`` poses equally spaced on a circle, each looking at the world origin."""
    if count < 2 or radius <= 0:
        raise ValueError("need count >= 2 and radius > 0")
    poses = []
    for k in range(count):
        th = 2.0 * np.pi * k / count
        pos = radius * np.array([np.cos(th) * np.cos(elevation),
                                 np.sin(th) * np.cos(elevation),
                                 np.sin(elevation)])
        poses.append(look_at(pos))
    return poses


def _is_extreme(eps) -> bool:
    return any(lo <= e <= hi for e in eps for lo, hi in EXTREME_SHAPE)


def random_sq(config: SceneConfig, seed=None) -> SuperquadricParams:
    """Uniform draw inside the configured parameter ranges."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    while True:
        xi = SuperquadricParams(
            a=rng.uniform(*config.size_range, 3),
            eps=rng.uniform(*config.shape_range, 2),
            p=rng.uniform(*config.position_range, 3),
            r=rng.uniform(*config.orientation_range, 3),
        )
        if not config.extreme_shapes or _is_extreme(xi.eps):
            return xi


def _fits_image(poly: ConvexPolygon, intr: CameraIntrinsics) -> bool:
    lo, hi = poly.bounds()
    w, h = intr.resolution
    return bool(lo[0] >= 0 and lo[1] >= 0 and hi[0] <= w and hi[1] <= h)


def observe(gt: SuperquadricParams, poses: list, intr: CameraIntrinsics, n_samples: int,
            rng: np.random.Generator, grid=DEFAULT_GRID) -> ObservationSet | None:
    """Exact mask observations of ``gt``; ``None`` if any view is invalid."""
    for pose in poses:
        if implicit_value(gt, world_to_sq(gt, pose.p)) <= 1.0:
            return None
    polys = []
    for pose in poses:
        try:
            poly = silhouette(gt, pose, intr, grid)
        except (BehindCamera, DegenerateInput):
            return None
        if not _fits_image(poly, intr):
            return None
        polys.append(poly)
    obs = [MaskObservation(i, poly, sample_interior(poly, n_samples, rng))
           for i, poly in enumerate(polys)]
    return ObservationSet(obs, poses, intr)


def generate_scene(config: SceneConfig | None = None, seed=None) -> Scene:
    """Random ground truth with valid, fully visible observations in every camera."""
    config = config or SceneConfig()
    rng = np.random.default_rng(seed)
    intr = config.intrinsics
    poses = camera_ring(config.camera_count, config.circle_radius, intr, config.elevation)
    for _ in range(MAX_REDRAWS):
        gt = random_sq(config, rng)
        obs = observe(gt, poses, intr, config.samples_per_observation, rng,
                      config.silhouette_grid)
        if obs is not None:
            return Scene(gt, obs)
    raise ExhaustedRejection(f"no valid scene after {MAX_REDRAWS} draws")


def gt_sample_depths(scene: Scene, iterations: int = 200) -> np.ndarray:
    """Depth of the first surface crossing along every sample ray, view-major.

    F is quasi-convex along a line (its sublevel sets are scaled copies of a
    convex body), so a golden-section search finds the deepest point of each
    ray and bisection then locates the entry crossing.
    """
    gt = scene.gt
    obs = scene.observations
    origins, rays = [], []
    for pose, o in zip(obs.poses, obs.observations):
        rays.append(world_bearing(pose, obs.intrinsics, o.samples))
        origins.append(np.broadcast_to(pose.p, rays[-1].shape))
    origins, rays = np.concatenate(origins), np.concatenate(rays)

    def F(d):
        return implicit_value(gt, world_to_sq(gt, origins + rays * d[:, None]))

    d_c = np.einsum("ij,ij->i", rays, gt.p - origins) / np.einsum("ij,ij->i", rays, rays)
    reach = float(np.linalg.norm(gt.a))
    lo = np.maximum(d_c - reach, 1e-9)
    hi = d_c + reach
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    for _ in range(iterations):
        c = b - g * (b - a)
        e = a + g * (b - a)
        left = F(c) < F(e)
        b = np.where(left, e, b)
        a = np.where(left, a, c)
    d_in = 0.5 * (a + b)
    inside = F(d_in) < 1.0
    a, b = lo.copy(), d_in.copy()
    for _ in range(iterations):
        m = 0.5 * (a + b)
        out = F(m) >= 1.0
        a = np.where(out, m, a)
        b = np.where(out, b, m)
    # grazing rays that only touch the surface keep their deepest point
    return np.where(inside, 0.5 * (a + b), d_in)


# JSON interchange

def scene_to_dict(scene: Scene) -> dict:
    obs = scene.observations
    intr = obs.intrinsics
    return {
        "gt_sq": scene.gt.to_dict(),
        "cameras": [{"f": intr.f.tolist(), "kappa": intr.kappa.tolist(),
                     "resolution": [float(v) for v in intr.resolution],
                     "p": pose.p.tolist(), "r": pose.r.tolist()} for pose in obs.poses],
        "observations": [{"view_id": o.view_id, "polygon": o.polygon.vertices.tolist(),
                          "samples": o.samples.tolist()} for o in obs.observations],
    }


def _need(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise SceneParseError(f"missing field '{key}' in {where}")
    return d[key]


def _vector(value, n: int, where: str) -> list:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SceneParseError(f"non-numeric value in {where}") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise SceneParseError(f"{where} must hold {n} finite numbers")
    return arr.tolist()


def scene_from_dict(d: dict) -> Scene:
    gt_d = _need(d, "gt_sq", "scene")
    gt = SuperquadricParams(**{k: _vector(_need(gt_d, k, "gt_sq"), n, f"gt_sq.{k}")
                               for k, n in (("a", 3), ("eps", 2), ("p", 3), ("r", 3))})
    cams = _need(d, "cameras", "scene")
    if not isinstance(cams, list) or not cams:
        raise SceneParseError("cameras must be a non-empty list")
    poses, intr = [], None
    for i, c in enumerate(cams):
        where = f"cameras[{i}]"
        ci = CameraIntrinsics(_vector(_need(c, "f", where), 2, where + ".f"),
                              _vector(_need(c, "kappa", where), 2, where + ".kappa"),
                              _vector(_need(c, "resolution", where), 2, where + ".resolution"))
        if intr is None:
            intr = ci
        elif not (np.allclose(ci.f, intr.f) and np.allclose(ci.kappa, intr.kappa)):
            raise SceneParseError(f"{where}: all cameras must share intrinsics")
        poses.append(Pose(_vector(_need(c, "p", where), 3, where + ".p"),
                          _vector(_need(c, "r", where), 3, where + ".r")))
    obs_l = _need(d, "observations", "scene")
    if not isinstance(obs_l, list) or len(obs_l) != len(poses):
        raise SceneParseError("need exactly one observation per camera")
    observations = []
    for i, o in enumerate(obs_l):
        where = f"observations[{i}]"
        vid = _need(o, "view_id", where)
        if not isinstance(vid, int) or not 0 <= vid < len(poses):
            raise SceneParseError(f"{where}.view_id out of range")
        try:
            poly = np.asarray(_need(o, "polygon", where), dtype=float)
            samples = np.asarray(_need(o, "samples", where), dtype=float)
        except (TypeError, ValueError):
            raise SceneParseError(f"{where}: polygon/samples must be [[x, y], ...]") from None
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise SceneParseError(f"{where}.polygon must hold >= 3 [x, y] pairs")
        if samples.ndim != 2 or samples.shape[1] != 2 or len(samples) < 3:
            raise SceneParseError(f"{where}.samples must hold >= 3 [x, y] pairs")
        observations.append(MaskObservation(vid, ConvexPolygon(poly), samples))
    observations.sort(key=lambda o: o.view_id)
    return Scene(gt, ObservationSet(observations, poses, intr))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1))


def load_scene(path) -> Scene:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scene_from_dict(d)
