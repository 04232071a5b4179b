"""Conformal prediction intervals for regression with missing covariates.

The package provides mask-aware split conformal prediction, conformalized
quantile regression (plain and with exact missing-data augmentation),
nonexchangeable conformal prediction with distance-decayed weights, and
localized conformal prediction with kernel-smoothed score recentring,
together with synthetic benchmarks for MCAR/MAR/MNAR missingness.
"""

from .conformal import (
    ConformalScore,
    LocalizedScore,
    NexcpWeights,
    PredictionInterval,
    cqr,
    cqr_mda_exact,
    lcp,
    nexcp,
    nexcp_weights,
    score_records,
    split_cp,
)
from .core import (
    Mask,
    MaskedDataset,
    MaskedSample,
    available_cases,
    mask_precedes,
    remask,
)
from .harness import (
    EvalReport,
    ExperimentConfig,
    ReportRow,
    enumerate_groups,
    mask_group_sampler,
    run_experiment,
)
from .metrics import (
    KernelSpec,
    WeightedEmpirical,
    heom_distance,
    kernel_weights,
    median_pairwise_bandwidth,
    weighted_quantile,
)
from .models import (
    FittedImputer,
    FittedPipeline,
    LinearModel,
    QuantilePair,
    fit_chained_imputer,
    fit_least_squares,
    fit_mean_pipeline,
    fit_quantile_pair,
    fit_quantile_pipeline,
    impute,
)
from .synth import (
    AmputeConfig,
    AmputeModel,
    DgpConfig,
    Example1Params,
    ampute,
    example1_conditional_variance,
    fit_ampute_model,
    gen_gaussian_linear,
)

__version__ = "0.1.0"

__all__ = [
    "AmputeConfig",
    "AmputeModel",
    "ConformalScore",
    "DgpConfig",
    "EvalReport",
    "Example1Params",
    "ExperimentConfig",
    "FittedImputer",
    "FittedPipeline",
    "KernelSpec",
    "LinearModel",
    "LocalizedScore",
    "Mask",
    "MaskedDataset",
    "MaskedSample",
    "NexcpWeights",
    "PredictionInterval",
    "QuantilePair",
    "ReportRow",
    "WeightedEmpirical",
    "ampute",
    "available_cases",
    "cqr",
    "cqr_mda_exact",
    "enumerate_groups",
    "example1_conditional_variance",
    "fit_ampute_model",
    "fit_chained_imputer",
    "fit_least_squares",
    "fit_mean_pipeline",
    "fit_quantile_pair",
    "fit_quantile_pipeline",
    "gen_gaussian_linear",
    "heom_distance",
    "impute",
    "kernel_weights",
    "lcp",
    "mask_group_sampler",
    "mask_precedes",
    "median_pairwise_bandwidth",
    "nexcp",
    "nexcp_weights",
    "remask",
    "run_experiment",
    "score_records",
    "split_cp",
    "weighted_quantile",
]
