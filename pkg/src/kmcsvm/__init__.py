"""Driving-style classification: per-class k-means reduction followed by an RBF SVM."""

from .dataset import (
    AGGRESSIVE,
    MODERATE,
    AffineScaler,
    Dataset,
    DatasetError,
    Sample,
    SubsetPartition,
    load_csv,
    partition,
    save_csv,
)
from .datagen import GenConfig, StyleProfile, default_profile, generate, generate_cohort, load_profiles
from .kmeans import SQRT_N_OVER_2, SQRT_N_OVER_3, ClusterSet, KRule, choose_k, cluster_per_label, lloyd
from .model_selection import GridResult, GridSpec, cv_score, grid_search, make_grid
from .pipeline import (
    BenchReport,
    EvalReport,
    WindowConfig,
    bench_compare,
    evaluate_offline,
    online_evaluate,
    train_kmc_svm,
)
from .svm import (
    ConvergenceError,
    KernelParams,
    SvmModel,
    TrainConfig,
    decision_value,
    load_model,
    predict,
    rbf,
    save_model,
    sv_count,
    train_smo,
)

__version__ = "0.1.0"
