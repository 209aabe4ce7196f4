"""Frechet-MOSUM change-point detection for sequences of 1-D distributions."""

from .distrib import (
    DistSeq,
    LqdFunction,
    ProbGrid,
    QuantileFunction,
    estimate_quantile,
    frechet_mean,
    frechet_variance,
    inverse_lqd,
    lqd_transform,
    wasserstein_distance,
)
from .mosum import (
    ChangePointSet,
    DetectConfig,
    ScanProfile,
    boundary_extension,
    critical_value,
    detect,
    scalar_mosum_detect,
    scan_statistic,
    sliding_stats,
)
from .multiscale import MultiscaleConfig, multiscale_detect
from .refine import cpt_plot_data, lsd_refine, register_indices

__version__ = "0.1.0"

__all__ = [
    "DistSeq",
    "LqdFunction",
    "ProbGrid",
    "QuantileFunction",
    "estimate_quantile",
    "frechet_mean",
    "frechet_variance",
    "inverse_lqd",
    "lqd_transform",
    "wasserstein_distance",
    "ChangePointSet",
    "DetectConfig",
    "ScanProfile",
    "boundary_extension",
    "critical_value",
    "detect",
    "scalar_mosum_detect",
    "scan_statistic",
    "sliding_stats",
    "MultiscaleConfig",
    "multiscale_detect",
    "cpt_plot_data",
    "lsd_refine",
    "register_indices",
]
