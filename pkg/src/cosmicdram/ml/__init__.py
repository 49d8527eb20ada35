from cosmicdram.ml.evaluation import (
    EvaluationReport,
    FeatureCorrelation,
    MitigationParams,
    auc_score,
    cost_benefit,
    evaluate_auc,
    feature_correlations,
    mitigation_from_jobs,
    run_prediction,
    tune,
)
from cosmicdram.ml.features import (
    FEATURE_GROUPS,
    LabeledDataset,
    Target,
    build_dataset,
    permute_group,
    split_chronological,
    undersample_majority,
)
from cosmicdram.ml.forest import (
    ForestModel,
    ForestParams,
    gini_group_importance,
    train_forest,
)
