"""Segment consumers by multivariate brand-preference rankings.

The package clusters respondents with PAM on a score-weighted Footrule
distance between preference rankings, quantifies clustering quality
(silhouette width, Pearson-Gamma, classical MDS), and measures how much
socio-demographic and personality variables explain the clusters via
multinomial-logit deviance tests and random-forest permutation importance,
tracked over a whole range of cluster counts.
"""

__version__ = "0.1.0"

from rankseg.data import (
    Dataset,
    RankingProfile,
    RespondentRecord,
    SurveySchema,
    Variable,
    load_survey,
    score_tipi,
    validate_dataset,
    write_survey,
)
from rankseg.distance import (
    DEFAULT_SCORES,
    DistanceMatrix,
    ScoreFunction,
    distance_matrix,
    distance_vector_correlation,
    footrule_distance,
    score_rank,
)
from rankseg.cluster import (
    ClusterSolution,
    LinkagePartition,
    SizeSummary,
    adjusted_rand,
    cluster_size_summary,
    linkage_cut,
    mean_within_cluster_distance,
    pam,
    solution_path,
)
from rankseg.validation import MdsEmbedding, asw, classical_mds, pearson_gamma
from rankseg.mlr import (
    DesignMatrix,
    DevianceTest,
    MlrFit,
    chi_square_sf,
    fit_mlr,
    lrt_block,
    lrt_per_variable,
)
from rankseg.forest import (
    ForestModel,
    ForestParams,
    ImportanceReport,
    baseline_error,
    fit_forest,
    oob_error,
    permutation_importance,
)
from rankseg.synth import GeneratorConfig, SyntheticSurvey, generate, generate_nested
from rankseg.pipeline import ExplainReport, PipelineConfig, run_pipeline

__all__ = [
    "Dataset",
    "RankingProfile",
    "RespondentRecord",
    "SurveySchema",
    "Variable",
    "load_survey",
    "write_survey",
    "score_tipi",
    "validate_dataset",
    "DEFAULT_SCORES",
    "ScoreFunction",
    "DistanceMatrix",
    "score_rank",
    "footrule_distance",
    "distance_matrix",
    "distance_vector_correlation",
    "ClusterSolution",
    "LinkagePartition",
    "SizeSummary",
    "pam",
    "solution_path",
    "linkage_cut",
    "adjusted_rand",
    "cluster_size_summary",
    "mean_within_cluster_distance",
    "asw",
    "pearson_gamma",
    "classical_mds",
    "MdsEmbedding",
    "DesignMatrix",
    "MlrFit",
    "DevianceTest",
    "fit_mlr",
    "lrt_block",
    "lrt_per_variable",
    "chi_square_sf",
    "ForestParams",
    "ForestModel",
    "ImportanceReport",
    "fit_forest",
    "oob_error",
    "permutation_importance",
    "baseline_error",
    "GeneratorConfig",
    "SyntheticSurvey",
    "generate",
    "generate_nested",
    "PipelineConfig",
    "ExplainReport",
    "run_pipeline",
]
