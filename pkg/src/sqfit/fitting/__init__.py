from .costs import DepthSet, cost_g1, cost_g2, residuals_g4, residuals_g5
from .initialization import stage1_triangulation, stage2_pca_init
from .pipeline import FitConfig, FitReport, StageSpec, parse_pipeline, run_pipeline, stage3

__all__ = ["DepthSet", "cost_g1", "cost_g2", "residuals_g4", "residuals_g5",
           "stage1_triangulation", "stage2_pca_init", "FitConfig", "FitReport", "StageSpec",
           "parse_pipeline", "run_pipeline", "stage3"]
