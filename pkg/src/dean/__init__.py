"""Feature-bagged ensembles of constant-target networks for unsupervised
anomaly detection, with group-fairness adaptations and rank-based
evaluation statistics."""

from ._backend import USE_NUMBA, backend_name
from .data import (
    Dataset,
    LabeledDataset,
    ScalerParams,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    make_synthetic,
    split,
    write_csv,
)
from .ensemble import (
    Ensemble,
    EnsembleConfig,
    base_score_matrix,
    ensemble_score,
    load,
    save,
    subset,
    train_ensemble,
    with_weights,
)
from .errors import DataFormatError, ModelFormatError, NumericError
from .fairness import (
    FairnessConfig,
    FairnessReport,
    GaConfig,
    evolve_weights,
    fair_loss_terms,
    fairness_metric,
    prune_for_fairness,
)
from .metrics import (
    ComparisonReport,
    ResultsTable,
    ScoredLabels,
    auc_pr,
    auc_roc,
    compare_algorithms,
    friedman_test,
    holm_correction,
    mean_ranks,
    repetition_stats,
    wilcoxon_signed_rank,
)
from .nn import AdamState, Layer, Mlp, TrainConfig, adam_step, forward, grad_check, init_mlp, loss_and_gradients, train
from .submodel import (
    FeatureMask,
    Submodel,
    SurrogateTarget,
    sample_feature_bag,
    submodel_score,
    surrogate_score,
    train_submodel,
)

__version__ = "0.1.0"
