"""Model-agnostic variable relevance via ghost variables.

Quantifies how much a fitted prediction model relies on each explanatory
variable by comparing test-set predictions against predictions where one
variable is replaced by its ghost (its regression on the remaining
variables), randomly permuted, or omitted via a refit; and analyzes
joint effects through the eigenstructure of the relevance matrix.
"""

from .analysis import ReportBundle, RunConfig, run_analysis
from .data import Dataset, SplitSample, ingest_csv, split, write_csv
from .linalg import (
    OlsFit,
    RngState,
    SymEigen,
    f_quantile,
    mvn_sample,
    ols_fit,
    ols_omit_update,
    partial_correlation_direct,
    sym_eigen,
)
from .predictors import (
    BasisSpec,
    ExternalPredictorConfig,
    Predictor,
    external_predictor,
    fit_basis_linear,
    fit_linear,
    fit_mlp,
    parse_basis,
)
from .relevance import (
    GhostColumnSet,
    PermutationPlan,
    RelevanceReport,
    critical_value,
    estimate_mspe,
    fit_ghosts,
    relevance_ghost,
    relevance_omission,
    relevance_permutation,
    ghost_f_statistic_check,
)
from .relmatrix import (
    CaseVariableMatrix,
    ClusterTree,
    PartialCorrelationMatrix,
    RelevanceMatrix,
    build_case_matrix,
    cluster_variables,
    gram_inverse_covariance_check,
    eigen_report,
    partial_corr_from_V,
    relevance_matrix,
    rp_matrix_structure_check,
)
from .synthetic import (
    ScenarioData,
    ScenarioSpec,
    gen_example1,
    gen_example2,
    gen_example3,
    generate,
)

__all__ = [
    "BasisSpec",
    "CaseVariableMatrix",
    "ClusterTree",
    "Dataset",
    "ExternalPredictorConfig",
    "GhostColumnSet",
    "OlsFit",
    "PartialCorrelationMatrix",
    "PermutationPlan",
    "Predictor",
    "RelevanceMatrix",
    "RelevanceReport",
    "ReportBundle",
    "RngState",
    "RunConfig",
    "ScenarioData",
    "ScenarioSpec",
    "SplitSample",
    "SymEigen",
    "build_case_matrix",
    "cluster_variables",
    "gram_inverse_covariance_check",
    "critical_value",
    "eigen_report",
    "estimate_mspe",
    "external_predictor",
    "f_quantile",
    "fit_basis_linear",
    "fit_ghosts",
    "fit_linear",
    "fit_mlp",
    "gen_example1",
    "gen_example2",
    "gen_example3",
    "generate",
    "ingest_csv",
    "mvn_sample",
    "ols_fit",
    "ols_omit_update",
    "parse_basis",
    "partial_corr_from_V",
    "partial_correlation_direct",
    "relevance_ghost",
    "relevance_matrix",
    "relevance_omission",
    "relevance_permutation",
    "rp_matrix_structure_check",
    "run_analysis",
    "split",
    "sym_eigen",
    "ghost_f_statistic_check",
    "write_csv",
]
