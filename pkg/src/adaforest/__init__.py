"""adaforest: imbalance-aware random forests for network-flow CSV data.

Resamples training data with RUS, SMOTE or ADASYN, trains bagged CART
trees from scratch, and evaluates with macro-averaged one-vs-rest metrics
and ROC/AUC.
"""

from .data import (
    DataError,
    Dataset,
    FoldPlan,
    PreprocessReport,
    RawTable,
    SplitPair,
    Standardizer,
    apply_standardizer,
    clean,
    fit_standardizer,
    load_csv,
    merge_classes,
    prune_correlated,
    stratified_kfold,
    train_test_split,
)
from .forest import (
    CartConfig,
    ForestConfig,
    ForestModel,
    best_split,
    build_tree,
    fit_forest,
    forest_from_json,
    forest_to_json,
    gini,
    oob_error,
    predict,
    predict_matrix,
    predict_proba,
    predict_proba_matrix,
)
from .metrics import (
    BinaryCounts,
    ConfusionMatrix,
    MetricsReport,
    RocCurve,
    auc,
    confusion,
    evaluate,
    f1,
    f_measure,
    macro_metrics,
    ovr_counts,
    ovr_macro_auc,
    precision,
    recall,
    roc_curve,
)
from .neighbors import NeighborQuery, knn, knn_indices
from .sampling import (
    AdasynPlan,
    SamplingStrategy,
    SynthesisRecord,
    adasyn,
    adasyn_plan,
    apportion,
    random_undersample,
    records_to_json,
    smote,
)

__version__ = "0.1.0"
