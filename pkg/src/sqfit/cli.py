"""Command-line harness: scene simulation, single fits, permutation experiments, gradient checks."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SceneParseError, SqFitError, UnknownStage
from .fitting.pipeline import FitConfig, format_pipeline, parse_pipeline, run_pipeline
from .metrics import N_MC, TrialMetrics, aggregate, evaluate
from .observation import silhouette
from .simulator import SceneConfig, generate_scene, load_scene, save_scene
from .sq_core import (
    SuperquadricParams, implicit_value, radial_distance, radial_distance_gradient,
    sample_surface_grid,
)

log = logging.getLogger("sqfit")

CSV_HEADER = ["pipeline", "IOU_median", "IOU_avg", "IOU_std", "RIOU_median", "RIOU_avg",
              "RIOU_std", "RIOUM_median", "RIOUM_avg", "RIOUM_std", "time_median_s",
              "time_avg_s", "time_std_s", "sigma"]

__all__ = ["ExperimentConfig", "parse_pipeline", "run_experiment", "fit_scene",
           "gradient_check", "main"]


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    pipelines: list = field(default_factory=lambda: ["3A", "1,2,3A", "1,2,3D,3A"])
    trials: int = 100
    seed: int = 0
    mc_samples: int = N_MC
    out: str = "results"
    workers: int = 1
    record_timing: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.mc_samples < 10_000:
            raise ValueError("mc_samples must be >= 1e4")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        # normalize and validate every pipeline spec up front
        self.pipelines = [format_pipeline(parse_pipeline(p)) for p in self.pipelines]
        if not self.pipelines:
            raise ValueError("at least one pipeline is required")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "scene" in d:
            d["scene"] = SceneConfig.from_dict(d["scene"])
        if isinstance(d.get("pipelines"), str):
            d["pipelines"] = split_pipelines(d["pipelines"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {"scene": self.scene.to_dict(), "pipelines": list(self.pipelines),
                "trials": self.trials, "seed": self.seed, "mc_samples": self.mc_samples,
                "out": self.out, "workers": self.workers, "record_timing": self.record_timing}


def split_pipelines(text: str) -> list:
    return [p for p in (s.strip() for s in text.split(";")) if p]


# experiments

def _failed_record(pipeline: str, error: str) -> dict:
    m = TrialMetrics(0.0, 0.0, 0.0, [], float("nan"))
    return {"pipeline": pipeline, "metrics": m.to_dict(), "report": None, "error": error}


def run_trial(index: int, config: ExperimentConfig) -> dict:
    """One permutation trial: a fresh scene, every pipeline fitted and scored on it."""
    seed = config.seed + index
    record = {"trial": index, "seed": seed, "gt": None, "results": []}
    try:
        scene = generate_scene(config.scene, seed)
    except SqFitError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
        record["results"] = [_failed_record(p, record["error"]) for p in config.pipelines]
        return record
    record["gt"] = scene.gt.to_dict()
    fit_cfg = FitConfig(silhouette_grid=config.scene.silhouette_grid)
    for spec in config.pipelines:
        try:
            rep = run_pipeline(spec, scene.observations, seed=seed, config=fit_cfg)
            times = rep.stage_times if config.record_timing else [0.0] * len(rep.snapshots)
            m = evaluate(rep.xi, scene.gt, scene.observations, times, config.mc_samples, seed)
            rd = rep.to_dict()
            if not config.record_timing:
                for s in rd["stages"]:
                    s["wall_time_s"] = 0.0
            record["results"].append({"pipeline": spec, "metrics": m.to_dict(), "report": rd,
                                      "error": None})
        except Exception as exc:  # a failed fit is an unsuccessful trial, never fatal
            log.warning("trial %d pipeline %s failed: %s", index, spec, exc)
            record["results"].append(_failed_record(spec, f"{type(exc).__name__}: {exc}"))
    return record


def _metrics_from_record(m: dict) -> TrialMetrics:
    return TrialMetrics(m["iou3d"], m["r_iou"], m["r_iou_m"], m["stage_times_s"],
                        m["volume_ratio"])


def summarize(records: list, pipelines: list) -> dict:
    """Aggregate row per pipeline, recomputed from the per-trial records alone."""
    by = {p: [] for p in pipelines}
    for rec in records:
        for res in rec["results"]:
            by[res["pipeline"]].append(_metrics_from_record(res["metrics"]))
    return {p: aggregate(ms) for p, ms in by.items()}


def _g(v: float) -> str:
    return f"{v:.6g}"


def summary_csv(rows: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p, r in rows.items():
        vals = []
        for s in (r.iou, r.r_iou, r.r_iou_m, r.time):
            vals += [s.median, s.average, s.std]
        w.writerow([p] + [_g(v) for v in vals] + [_g(r.sigma)])
    return buf.getvalue()


def _trial_job(args):
    return run_trial(*args)


def run_experiment(config: ExperimentConfig, write: bool = True):
    """Run all trials; returns ``(rows, records)`` and writes CSV/JSON under ``config.out``."""
    jobs = [(i, config) for i in range(config.trials)]
    if config.workers == 1:
        records = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            records = list(ex.map(_trial_job, jobs))
    rows = summarize(records, config.pipelines)
    if write:
        out = Path(config.out)
        (out / "trials").mkdir(parents=True, exist_ok=True)
        for rec in records:
            (out / "trials" / f"trial_{rec['trial']:04d}.json").write_text(
                json.dumps(rec, indent=1), encoding="utf-8")
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1), encoding="utf-8")
        with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(summary_csv(rows))
    return rows, records


# single fits

def _write_rows(path: Path, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _dump_sq(out: Path, tag: str, xi: SuperquadricParams, scene) -> None:
    obs = scene.observations
    _write_rows(out / f"{tag}_surface.csv", ["x", "y", "z"],
                sample_surface_grid(xi).round(9).tolist())
    rows = []
    for o, pose in zip(obs.observations, obs.poses):
        try:
            poly = silhouette(xi, pose, obs.intrinsics)
        except SqFitError:
            continue
        rows += [[o.view_id, k, *v] for k, v in enumerate(poly.vertices.round(9).tolist())]
    _write_rows(out / f"{tag}_silhouettes.csv", ["view_id", "vertex", "x", "y"], rows)


def fit_scene(scene_path, pipeline: str, out_dir) -> dict:
    """Fit one scene file; writes ``report.json`` plus per-stage plotting dumps."""
    scene = load_scene(scene_path)
    stages = parse_pipeline(pipeline)
    rep = run_pipeline(stages, scene.observations)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = rep.to_dict()
    d["pipeline"] = format_pipeline(stages)
    d["view_ids"] = [o.view_id for o in scene.observations.observations]
    d["metrics"] = evaluate(rep.xi, scene.gt, scene.observations, rep.stage_times).to_dict()
    (out / "report.json").write_text(json.dumps(d, indent=1), encoding="utf-8")
    _dump_sq(out, "gt", scene.gt, scene)
    _dump_sq(out, "stage_00_init", rep.initial_xi, scene)
    for k, snap in enumerate(rep.snapshots, start=1):
        _dump_sq(out, f"stage_{k:02d}_{snap.stage}", snap.xi, scene)
    return d


# gradient validation

def _random_gradcheck_case(rng: np.random.Generator):
    """Random SQ and world point with ||t|| in [0.2, 10] and F(t) in [0.1, 10]."""
    while True:
        xi = SuperquadricParams(a=rng.uniform(0.5, 3.0, 3), eps=rng.uniform(0.3, 1.9, 2),
                                p=rng.uniform(-3, 3, 3), r=rng.uniform(-np.pi, np.pi, 3))
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        # F is homogeneous of degree 2/eps1 along rays from the center
        f_target = 10.0 ** rng.uniform(-1, 1)
        t = u * (f_target / implicit_value(xi, u)) ** (xi.eps[0] / 2.0)
        if 0.2 <= np.linalg.norm(t) <= 10.0:
            return xi, xi.p + xi.rotation @ t


def gradient_check(n: int = 100, seed: int = 0, h: float = 1e-6) -> np.ndarray:
    """Relative error of the analytic radial-distance gradient vs central differences."""
    rng = np.random.default_rng(seed)
    errs = np.empty(n)
    for k in range(n):
        xi, w = _random_gradcheck_case(rng)
        _, d_xi, d_w = radial_distance_gradient(xi, w[None])
        analytic = np.concatenate([d_xi[0], d_w[0]])
        x0 = np.concatenate([xi.to_vector(), w])
        fd = np.empty_like(x0)
        for j in range(len(x0)):
            xp, xm = x0.copy(), x0.copy()
            xp[j] += h
            xm[j] -= h
            gp = radial_distance(SuperquadricParams.from_vector(xp[:11]),
                                 (xp[11:] - xp[5:8]) @ SuperquadricParams.from_vector(xp[:11]).rotation)
            gm = radial_distance(SuperquadricParams.from_vector(xm[:11]),
                                 (xm[11:] - xm[5:8]) @ SuperquadricParams.from_vector(xm[:11]).rotation)
            fd[j] = (gp - gm) / (2 * h)
        errs[k] = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
    return errs


# entry point

def _load_config(args) -> ExperimentConfig:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SceneParseError(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
    for key in ("seed", "trials", "workers", "out"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if getattr(args, "mc_samples", None) is not None:
        d["mc_samples"] = args.mc_samples
    if getattr(args, "pipelines", None):
        d["pipelines"] = split_pipelines(args.pipelines)
    if getattr(args, "no_timing", False):
        d["record_timing"] = False
    return ExperimentConfig.from_dict(d)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sqfit", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("simulate", help="generate random scene JSON files")
    common(p)
    p.add_argument("--trials", type=int, help="number of scenes (seeds base..base+n-1)")

    p = sub.add_parser("fit", help="fit one scene file")
    p.add_argument("scene")
    p.add_argument("--pipelines", default="1,2,3D,3A", help="single stage sequence")
    p.add_argument("--out", default="fit_out")

    p = sub.add_parser("experiment", help="permutation experiment")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--pipelines", help="e.g. '3A;1,2,3A;1,2,3D,3A'")
    p.add_argument("--workers", type=int)
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--no-timing", action="store_true",
                   help="write zero wall times so outputs are byte-reproducible")

    p = sub.add_parser("gradcheck", help="validate the analytic radial-distance gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-5)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            cfg = _load_config(args)
            out = Path(cfg.out)
            out.mkdir(parents=True, exist_ok=True)
            n = args.trials or 1
            for i in range(n):
                scene = generate_scene(cfg.scene, cfg.seed + i)
                path = out / f"scene_{cfg.seed + i}.json"
                save_scene(scene, path)
                print(path)
        elif args.command == "fit":
            d = fit_scene(args.scene, args.pipelines, args.out)
            m = d["metrics"]
            print(f"{d['pipeline']}: IOU={m['iou3d']:.4f} R-IOU={m['r_iou']:.4f} "
                  f"R-IOU-M={m['r_iou_m']:.4f} -> {args.out}")
        elif args.command == "experiment":
            cfg = _load_config(args)
            rows, _ = run_experiment(cfg)
            sys.stdout.write(summary_csv(rows))
        elif args.command == "gradcheck":
            errs = gradient_check(args.trials, args.seed)
            worst = float(errs.max())
            print(f"max relative error {worst:.3e} over {len(errs)} configurations (tol {args.tol:g})")
            return 0 if worst < args.tol else 1
    except (SceneParseError, UnknownStage, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SqFitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
