"""Veracity-score robust geostatistics.

Scores noisy, irregularly spaced observations against their local
neighborhoods and uses the scores for weighted trend estimation,
residual smoothing, variogram fitting and kriging.
"""
from .covariance import (EmpiricalVariogram, SmoothingConfig, VariogramModel, empirical_variogram,
                         fit_variogram_wls, semivariance, smooth_residuals)
from .dataset import CsvSchema, DesignSpec, Location, SpatialDataset, read_csv, write_csv
from .errors import InputError, NumericalError, VerigeoError
from .kriging import KrigingPrediction, LoocvReport, PipelineConfig, krige, loocv, run_pipeline
from .regression import RegressionFit, SolveReport, fit_egls, fit_ols, fit_weighted
from .robust_stats import SummaryPair, quantile, summarize
from .veracity import VeracityConfig, VeracityScores, score_all, veracity_function

__version__ = "0.1.0"

__all__ = [
    "CsvSchema", "DesignSpec", "EmpiricalVariogram", "InputError", "KrigingPrediction",
    "Location", "LoocvReport", "NumericalError", "PipelineConfig", "RegressionFit",
    "SmoothingConfig", "SolveReport", "SpatialDataset", "SummaryPair", "VariogramModel",
    "VeracityConfig", "VeracityScores", "VerigeoError", "empirical_variogram", "fit_egls",
    "fit_ols", "fit_variogram_wls", "fit_weighted", "krige", "loocv", "quantile", "read_csv",
    "run_pipeline", "score_all", "semivariance", "smooth_residuals", "summarize",
    "veracity_function", "write_csv",
]
