"""Spatially clustered factor analysis.

Joint estimation of a spatial partition and one maximum-likelihood factor
model per group, with scenario generators, weight schemes, selection
criteria and covariance-recovery metrics around it.
"""

from .core import (
    FitReport,
    Partition,
    ScfaConfig,
    convergence_statistic,
    fit_efa_report,
    fit_scfa,
    init_partition,
    penalized_objective,
    update_membership,
)
from .errors import (
    DidNotConverge,
    InvalidInit,
    MissingPartition,
    NotSymmetric,
    RankDeficientSample,
    ScfaError,
    ShapeMismatch,
    SizeMismatch,
    TooFewPoints,
    UnknownNode,
    ZeroVarianceColumn,
)
from .factor_model import (
    DataMatrix,
    FactorModel,
    fit_ml_efa,
    fit_ml_efa_from_moment,
    implied_covariance,
    log_densities,
    log_density,
    max_num_factors,
    ml_discrepancy,
    profile_loadings,
    standardize,
    varimax,
)
from .metrics import (
    EvaluationResult,
    chebyshev_distance,
    expand_per_sample,
    frobenius_distance,
    gaussian_w2_distance,
    label_agreement,
)
from .model_selection import (
    ICResult,
    ParallelAnalysisResult,
    information_criterion,
    parallel_analysis,
    select_G,
)
from .simulation import (
    ScenarioSpec,
    SyntheticDataset,
    dataset_to_csv,
    generate_dataset,
    generate_loadings,
    generate_locations,
)
from .spatial_weights import (
    DistanceTransform,
    LocationTable,
    StationGraph,
    WeightMatrix,
    exponential_weights,
    knn_weights,
    load_locations,
    load_station_graph,
    project_equirectangular,
    shortest_path_distances,
    topology_weights,
)

__version__ = "0.1.0"

__all__ = [
    "DataMatrix",
    "DidNotConverge",
    "DistanceTransform",
    "EvaluationResult",
    "FactorModel",
    "FitReport",
    "ICResult",
    "InvalidInit",
    "LocationTable",
    "MissingPartition",
    "NotSymmetric",
    "ParallelAnalysisResult",
    "Partition",
    "RankDeficientSample",
    "ScenarioSpec",
    "ScfaConfig",
    "ScfaError",
    "ShapeMismatch",
    "SizeMismatch",
    "StationGraph",
    "SyntheticDataset",
    "TooFewPoints",
    "UnknownNode",
    "WeightMatrix",
    "ZeroVarianceColumn",
    "chebyshev_distance",
    "convergence_statistic",
    "dataset_to_csv",
    "expand_per_sample",
    "exponential_weights",
    "fit_efa_report",
    "fit_ml_efa",
    "fit_ml_efa_from_moment",
    "fit_scfa",
    "frobenius_distance",
    "gaussian_w2_distance",
    "generate_dataset",
    "generate_loadings",
    "generate_locations",
    "implied_covariance",
    "information_criterion",
    "init_partition",
    "knn_weights",
    "label_agreement",
    "load_locations",
    "load_station_graph",
    "log_densities",
    "log_density",
    "max_num_factors",
    "ml_discrepancy",
    "parallel_analysis",
    "penalized_objective",
    "profile_loadings",
    "project_equirectangular",
    "select_G",
    "shortest_path_distances",
    "standardize",
    "topology_weights",
    "update_membership",
    "varimax",
]
