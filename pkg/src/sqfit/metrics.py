"""Evaluation metrics for fitted superquadrics and their aggregation over trials."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import beta

from .camera import CameraIntrinsics
from .errors import BehindCamera, DegenerateInput, EmptyInput
from .fitting.costs import view_ious
from .observation import DEFAULT_GRID, ObservationSet, silhouette
from .polygon import iou
from .sq_core import SuperquadricParams, implicit_value, world_to_sq

N_MC = 100_000
_CORNERS = np.array(list(product((-1.0, 1.0), repeat=3)))


def world_aabb(params: SuperquadricParams):
    """Axis-aligned bounds of the rotated bounding box of ``params``."""
    corners = (_CORNERS * params.a) @ params.rotation.T + params.p
    return corners.min(axis=0), corners.max(axis=0)


def inside(params: SuperquadricParams, pts) -> np.ndarray:
    return implicit_value(params, world_to_sq(params, pts)) < 1.0


def iou3d(a: SuperquadricParams, b: SuperquadricParams, n_mc: int = N_MC, seed=0) -> float:
    """Monte-Carlo volumetric IOU, sampling the union of both bounding boxes."""
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 1e4")
    lo_a, hi_a = world_aabb(a)
    lo_b, hi_b = world_aabb(b)
    lo, hi = np.minimum(lo_a, lo_b), np.maximum(hi_a, hi_b)
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((n_mc, 3)) * (hi - lo)
    in_a, in_b = inside(a, pts), inside(b, pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def sq_volume(params: SuperquadricParams) -> float:
    """Closed-form enclosed volume."""
    e1, e2 = params.eps
    return float(2.0 * np.prod(params.a) * e1 * e2 * beta(e1 / 2 + 1, e1) * beta(e2 / 2, e2 / 2))


def r_iou(est: SuperquadricParams, gt: SuperquadricParams, poses: list,
          intrinsics: CameraIntrinsics, grid=DEFAULT_GRID) -> float:
    """Mean silhouette IOU of ``est`` against ``gt`` over the given camera poses."""
    scores = []
    for pose in poses:
        try:
            scores.append(iou(silhouette(est, pose, intrinsics, grid),
                              silhouette(gt, pose, intrinsics, grid)))
        except (BehindCamera, DegenerateInput):
            scores.append(0.0)
    return float(np.mean(scores))


def r_iou_m(est: SuperquadricParams, obs: ObservationSet, grid=DEFAULT_GRID) -> float:
    """Mean silhouette IOU of ``est`` against each view's sample hull."""
    return float(view_ious(est, obs, grid).mean())


@dataclass
class TrialMetrics:
    iou3d: float
    r_iou: float
    r_iou_m: float
    stage_times: list = field(default_factory=list)
    volume_ratio: float = float("nan")

    @property
    def success(self) -> bool:
        return self.iou3d > 0.0

    @property
    def total_time(self) -> float:
        return float(sum(self.stage_times))

    def to_dict(self) -> dict:
        return {"iou3d": self.iou3d, "r_iou": self.r_iou, "r_iou_m": self.r_iou_m,
                "success": self.success, "stage_times_s": list(self.stage_times),
                "time_s": self.total_time, "volume_ratio": self.volume_ratio}


@dataclass
class Stats:
    median: float
    average: float
    std: float

    @classmethod
    def of(cls, values) -> "Stats":
        v = np.asarray(values, dtype=float)
        std = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
        return cls(float(np.median(v)), float(np.mean(v)), std)


@dataclass
class AggregateRow:
    iou: Stats
    r_iou: Stats
    r_iou_m: Stats
    time: Stats
    sigma: float  # success fraction in [0, 1]
    n: int


def aggregate(trials: list) -> AggregateRow:
    if not trials:
        raise EmptyInput("no trials to aggregate")
    return AggregateRow(
        iou=Stats.of([t.iou3d for t in trials]),
        r_iou=Stats.of([t.r_iou for t in trials]),
        r_iou_m=Stats.of([t.r_iou_m for t in trials]),
        time=Stats.of([t.total_time for t in trials]),
        sigma=float(np.mean([t.success for t in trials])),
        n=len(trials),
    )


def evaluate(est: SuperquadricParams, gt: SuperquadricParams, obs: ObservationSet,
             stage_times=(), n_mc: int = N_MC, seed=0) -> TrialMetrics:
    """All trial metrics of one fit against its ground truth."""
    return TrialMetrics(
        iou3d=iou3d(est, gt, n_mc, seed),
        r_iou=r_iou(est, gt, obs.poses, obs.intrinsics),
        r_iou_m=r_iou_m(est, obs),
        stage_times=list(stage_times),
        volume_ratio=sq_volume(est) / sq_volume(gt),
    )
