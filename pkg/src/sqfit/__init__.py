"""Superquadric shape recovery from multi-view convex mask observations."""

from .sq_core import SuperquadricParams, implicit_value, radial_distance, surface_point
from .fitting.pipeline import FitConfig, FitReport, parse_pipeline, run_pipeline
from .simulator import Scene, SceneConfig, generate_scene

__version__ = "0.1.0"

__all__ = ["SuperquadricParams", "implicit_value", "radial_distance", "surface_point",
           "FitConfig", "FitReport", "parse_pipeline", "run_pipeline",
           "Scene", "SceneConfig", "generate_scene"]
