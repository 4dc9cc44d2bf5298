"""Stage-3 optimization variants and the multi-stage pipeline runner."""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import SqFitError, UnknownStage
from ..observation import DEFAULT_GRID, ObservationSet
from ..optim import LmSettings, ParameterVector, levenberg_marquardt
from ..sq_core import N_PARAMS, SuperquadricParams
from .costs import C_P_ANALYTIC, C_P_NUMERIC, DepthSet, RadialProblem, sq_bounds, view_ious
from .initialization import stage1_triangulation, stage2_pca_init

log = logging.getLogger(__name__)

STAGE_IDS = ("1", "2", "3A", "3B", "3C", "3D", "3E", "3F")
NUMERIC_VARIANTS = ("A", "B", "F")
DEPTH_MIN = 0.1

# free entries of the 11-vector per variant
_A, _EPS, _P, _R = list(range(0, 3)), [3, 4], list(range(5, 8)), list(range(8, 11))
_QUADRIC = _A + _P + _R
_FREE = {
    "A": _A + _EPS + _P + _R,
    "B": _QUADRIC,
    "C": _QUADRIC,
    "D": _QUADRIC,
    "E": _A + _EPS + _P + _R,
    "F": _EPS,
}
_DEPTH_MODE = {"C": "combined", "D": "separate", "E": "separate"}


@dataclass(frozen=True)
class StageSpec:
    id: str
    settings: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.id not in STAGE_IDS:
            raise UnknownStage(self.id)

    def __str__(self):
        return self.id


def parse_pipeline(spec: str) -> list:
    """Parse ``"1,2,3D,3A"`` (case-insensitive, whitespace ignored) into stage specs."""
    text = re.sub(r"\s+", "", spec)
    if not text:
        return []
    out = []
    for tok in text.split(","):
        up = tok.upper()
        if up not in STAGE_IDS:
            raise UnknownStage(tok)
        out.append(StageSpec(up))
    return out


def format_pipeline(stages) -> str:
    return ",".join(str(s) for s in stages)


@dataclass
class FitConfig:
    """Knobs for one pipeline run; defaults reproduce the reference setup."""

    cold_start_size: float = 1.0
    cold_start_depth: float = 10.0
    silhouette_grid: tuple = DEFAULT_GRID
    lm: LmSettings = field(default_factory=LmSettings)
    c_p_numeric: float = C_P_NUMERIC
    c_p_analytic: float = C_P_ANALYTIC


@dataclass
class StageSnapshot:
    stage: str
    xi: SuperquadricParams
    depths: Optional[DepthSet]
    wall_time: float
    termination: str = ""
    iterations: int = 0
    cost_history: list = field(default_factory=list)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "xi": self.xi.to_dict(),
            "depths": self.depths.to_dict() if self.depths is not None else None,
            "wall_time_s": self.wall_time,
            "termination": self.termination,
            "iterations": self.iterations,
            "initial_cost": self.cost_history[0] if self.cost_history else None,
            "final_cost": self.cost_history[-1] if self.cost_history else None,
            "error": self.error,
        }


@dataclass
class FitReport:
    initial_xi: SuperquadricParams
    initial_depths: DepthSet
    snapshots: list = field(default_factory=list)

    @property
    def xi(self) -> SuperquadricParams:
        return self.snapshots[-1].xi if self.snapshots else self.initial_xi

    @property
    def depths(self) -> DepthSet:
        return self.snapshots[-1].depths if self.snapshots else self.initial_depths

    @property
    def stage_times(self) -> list:
        return [s.wall_time for s in self.snapshots]

    @property
    def total_time(self) -> float:
        return float(sum(self.stage_times))

    def to_dict(self) -> dict:
        return {
            "initial_xi": self.initial_xi.to_dict(),
            "final_xi": self.xi.to_dict(),
            "stages": [s.to_dict() for s in self.snapshots],
        }


def cold_start(obs: ObservationSet, config: FitConfig | None = None):
    """Unit-size quadric at the mean camera look-at point, identity orientation."""
    config = config or FitConfig()
    centers = np.array([pose.p for pose in obs.poses])
    ref = centers.mean(axis=0)
    looks = []
    for pose in obs.poses:
        axis = pose.rotation[:, 2]
        looks.append(pose.p + max(float(axis @ (ref - pose.p)), 0.0) * axis)
    xi = SuperquadricParams(a=np.full(3, config.cold_start_size), eps=(1.0, 1.0),
                            p=np.mean(looks, axis=0), r=np.zeros(3))
    return xi, DepthSet("combined", np.full(len(obs), config.cold_start_depth))


def _lm_settings(config: FitConfig, variant: str, overrides: dict) -> LmSettings:
    numeric = variant in NUMERIC_VARIANTS
    s = replace(config.lm,
                penalty_weight=config.c_p_numeric if numeric else config.c_p_analytic,
                penalty_mode="add" if numeric else "append")
    return replace(s, **overrides) if overrides else s


def stage3(variant: str, xi0: SuperquadricParams, obs: ObservationSet,
           depths0: DepthSet | None = None, config: FitConfig | None = None,
           overrides: dict | None = None):
    """Run one stage-3 optimization setup; returns ``(xi, depths, LmResult)``."""
    config = config or FitConfig()
    variant = variant.upper()
    if variant not in _FREE:
        raise UnknownStage("3" + variant)
    settings = _lm_settings(config, variant, overrides or {})
    x_xi = xi0.to_vector()
    if variant in ("B", "C", "D"):
        x_xi[3:5] = 1.0
    lower, upper = sq_bounds()
    mask = np.zeros(N_PARAMS, bool)
    mask[_FREE[variant]] = True

    if variant in NUMERIC_VARIANTS:
        grid = config.silhouette_grid

        def residuals(x):
            return 1.0 - view_ious(SuperquadricParams.from_vector(x), obs, grid)

        x0 = ParameterVector(x_xi, mask, lower, upper)
        res = levenberg_marquardt(residuals, None, x0, settings)
        return SuperquadricParams.from_vector(res.x).wrapped(), depths0, res

    mode = _DEPTH_MODE[variant]
    if depths0 is None:
        depths0 = cold_start(obs, config)[1]
    d = depths0.as_combined(obs.n_samples) if mode == "combined" else depths0.as_separate(obs.n_samples)
    problem = RadialProblem(obs, mode)
    nd = len(d.values)
    x0 = ParameterVector(
        np.concatenate([x_xi, d.values]),
        np.concatenate([mask, np.ones(nd, bool)]),
        np.concatenate([lower, np.full(nd, DEPTH_MIN)]),
        np.concatenate([upper, np.full(nd, np.inf)]),
    )
    res = levenberg_marquardt(problem.residuals, problem.jacobian, x0, settings)
    xi = SuperquadricParams.from_vector(res.x[:N_PARAMS]).wrapped()
    return xi, DepthSet(mode, res.x[N_PARAMS:]), res


def run_pipeline(stages, obs: ObservationSet, seed: int | None = None,
                 config: FitConfig | None = None,
                 init: tuple | None = None) -> FitReport:
    """Execute ``stages`` in order, threading ``(xi, depths)`` forward.

    Stage errors are recorded in the snapshot and the previous state is kept.
    ``seed`` is accepted for interface symmetry; every stage is deterministic.
    """
    config = config or FitConfig()
    if isinstance(stages, str):
        stages = parse_pipeline(stages)
    xi, depths = init if init is not None else cold_start(obs, config)
    report = FitReport(xi, depths)
    p_hat = None
    for spec in stages:
        t0 = time.perf_counter()
        snap = StageSnapshot(spec.id, xi, depths, 0.0)
        try:
            if spec.id == "1":
                p_hat, depths = stage1_triangulation(obs)
                xi = xi.replace(p=p_hat)
                snap.termination = "closed_form"
            elif spec.id == "2":
                center = p_hat if p_hat is not None else xi.p
                xi, depths = stage2_pca_init(obs, depths, center)
                snap.termination = "closed_form"
            else:
                xi, depths, res = stage3(spec.id[1], xi, obs, depths, config, spec.settings)
                snap.termination = res.termination
                snap.iterations = res.iterations
                snap.cost_history = res.cost_history
            snap.xi, snap.depths = xi.wrapped(), depths
            xi = snap.xi
        except (SqFitError, np.linalg.LinAlgError, ValueError) as exc:
            log.info("stage %s failed: %s", spec.id, exc)
            snap.error = f"{type(exc).__name__}: {exc}"
        snap.wall_time = time.perf_counter() - t0
        report.snapshots.append(snap)
    return report
