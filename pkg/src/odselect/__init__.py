"""Meta-learned single-shot model selection for unsupervised outlier detection."""

from .datasets import (
    Dataset,
    FoldAssignment,
    TestbedConfig,
    generate_motherset,
    load_csv,
    make_poc_testbed,
    sample_childset,
)
from .detectors import ModelSpec, enumerate_model_set, fit_score, score_to_ap_trials
from .errors import OdselectError
from .evaluation import EvalConfig, EvalReport, run_cv
from .metafeatures import extract, extract_landmarker, extract_statistical, manifest
from .metalearner import MetaLearner, TrainConfig, load, save, select_model, train_offline
from .metrics import average_precision, wilcoxon_signed_rank
from .pmatrix import PerformanceMatrix, build_performance_matrix
from .rankmf import LatentFactors, OptimizerConfig, dcg_exact, fit, sdcg
from .regressor import EmbeddingModel, TreeEnsembleRegressor, embed, fit_embedding, fit_regressor, predict_latent

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FoldAssignment", "TestbedConfig", "generate_motherset",
    "load_csv", "make_poc_testbed", "sample_childset",
    "ModelSpec", "enumerate_model_set", "fit_score", "score_to_ap_trials",
    "OdselectError",
    "EvalConfig", "EvalReport", "run_cv",
    "extract", "extract_landmarker", "extract_statistical", "manifest",
    "MetaLearner", "TrainConfig", "load", "save", "select_model", "train_offline",
    "average_precision", "wilcoxon_signed_rank",
    "PerformanceMatrix", "build_performance_matrix",
    "LatentFactors", "OptimizerConfig", "dcg_exact", "fit", "sdcg",
    "EmbeddingModel", "TreeEnsembleRegressor", "embed", "fit_embedding",
    "fit_regressor", "predict_latent",
    "__version__",
]
