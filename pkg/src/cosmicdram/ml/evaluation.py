"""Model selection, evaluation and cost-benefit of the error prediction."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import ParameterGrid

from cosmicdram.core.base import CDObject
from cosmicdram.core.data_objects import Dataset, JobRecord, NeutronSeries, TestStatus
from cosmicdram.core.exceptions import ConfigurationError, DegenerateLabelsError
from cosmicdram.ml.features import (
    LabeledDataset,
    Target,
    build_dataset,
    permute_group,
    split_chronological,
    undersample_majority,
)
from cosmicdram.ml.forest import (
    DEFAULT_GRID,
    ForestModel,
    ForestParams,
    gini_group_importance,
    train_forest,
)
from cosmicdram.stats import by_adjust, kendall_tau_b

logger = logging.getLogger(__name__)


@dataclass
class MitigationParams(CDObject):
    """Node-hour costs and benefits of acting on the predictions."""

    cost_per_mitigation: float = 1.0
    """Node-hours spent on each positive prediction (e.g. a checkpoint)."""

    benefit_per_true_positive: float = 10.0
    """Node-hours saved by each correctly predicted failure."""

    training_cost: float = 0.0
    """Node-hours spent training the model."""

    def __post_init__(self):
        for name in ("cost_per_mitigation", "benefit_per_true_positive", "training_cost"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class FeatureCorrelation(CDObject):
    """Significant rank correlation between two features."""

    feature: str
    other: str
    tau_b: float
    p_raw: float
    p_adj: float



@dataclass
class EvaluationReport(CDObject):
    target: Target
    auc: float
    group_importance: dict[str, float] = field(default_factory=dict)
    saved_node_hours: float | None = None
    """Only computed for uncorrected-error prediction."""

    params: ForestParams | None = None
    seed: int = 0
    permuted_groups: list[str] = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    n_test_positives: int = 0
    true_positives: int = 0
    positive_predictions: int = 0
    correlated_features: list[FeatureCorrelation] = field(default_factory=list)
    """Neutron features significantly correlated with another feature."""


def auc_score(labels: Sequence[bool], scores: Sequence[float]) -> float:
    """
    Area under the ROC curve, ties between scores counted as half.

    Raises
    ------
    DegenerateLabelsError
        If the labels hold a single class.
    """
    labels = np.asarray(labels, dtype=bool)
    if labels.all() or not labels.any():
        raise DegenerateLabelsError("AUC is undefined for single-class labels")
    return float(roc_auc_score(labels, np.asarray(scores, dtype=float)))


def evaluate_auc(model: ForestModel, test: LabeledDataset) -> float:
    return auc_score(test.labels, model.predict_proba(test.features))


def feature_correlations(
    data: LabeledDataset, group: str = "neutron", alpha: float = 0.05
) -> list[FeatureCorrelation]:
    """
    Kendall tau-b tests between each feature of a group and every other feature.

    A significant pair means that the group could be redundant with features
    outside of it, so that its importance in a forest would not be its own.
    Pairs involving a constant column are not tested. The p-values of the
    tested pairs are adjusted together with Benjamini-Yekutieli.

    Parameters
    ----------
    data
        Feature matrix, usually before any permutation.
    group
        Name of the feature group tested against the others.
    alpha
        False discovery rate level.

    Returns
    -------
    list of FeatureCorrelation
        The significant pairs, by increasing adjusted p-value.
    """
    inside = data.group_columns(group)
    outside = [i for i in range(len(data.feature_names)) if i not in inside]
    tested = []
    for i in inside:
        for j in outside:
            result = kendall_tau_b(data.features[:, i], data.features[:, j])
            if result.status == TestStatus.OK:
                tested.append((data.feature_names[i], data.feature_names[j], result))
    adjusted = by_adjust([result.p_raw for _, _, result in tested]).p_adj
    significant = [
        FeatureCorrelation(feature, other, result.tau_b, result.p_raw, p_adj)
        for (feature, other, result), p_adj in zip(tested, adjusted)
        if p_adj <= alpha
    ]
    logger.info(
        "%d of %d %s feature pairs significantly correlated", len(significant), len(tested), group
    )
    return sorted(significant, key=lambda c: (c.p_adj, c.feature, c.other))


def tune(
    train: LabeledDataset,
    validation: LabeledDataset,
    grid: dict[str, list] | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> tuple[ForestParams, dict[str, float]]:
    """
    Pick the hyperparameters with the best validation AUC.

    Ties keep the first candidate in grid order. When the validation set
    holds a single class the first candidate is returned.

    Returns
    -------
    (ForestParams, dict)
        The best parameters and the validation AUC of each candidate.
    """
    candidates = [ForestParams(**p) for p in ParameterGrid(grid or DEFAULT_GRID)]
    if validation.labels.all() or not validation.labels.any():
        logger.warning("single-class validation set, using the first grid candidate")
        return candidates[0], {}
    scores: dict[str, float] = {}
    best, best_auc = candidates[0], -1.0
    for params in candidates:
        auc = evaluate_auc(train_forest(train, params, seed, n_jobs), validation)
        key = f"n_trees={params.n_trees},max_depth={params.max_depth},min_leaf={params.min_leaf}"
        scores[key] = auc
        logger.debug("validation AUC %.4f for %s", auc, key)
        if auc > best_auc:
            best, best_auc = params, auc
    return best, scores


def cost_benefit(
    labels: Sequence[bool], predictions: Sequence[bool], params: MitigationParams
) -> float:
    """
    Node-hours saved by mitigating every positive prediction.

    ``saved = TP * benefit - positive predictions * cost - training cost``
    """
    labels = np.asarray(labels, dtype=bool)
    predictions = np.asarray(predictions, dtype=bool)
    true_positives = int(np.sum(labels & predictions))
    positives = int(np.sum(predictions))
    return (
        true_positives * params.benefit_per_true_positive
        - positives * params.cost_per_mitigation
        - params.training_cost
    )


def mitigation_from_jobs(
    jobs: Sequence[JobRecord],
    cost_per_mitigation: float = 1.0,
    training_cost: float = 0.0,
) -> MitigationParams:
    """Mitigation parameters valuing a true positive at the mean node-hours of a job."""
    if not jobs:
        raise ConfigurationError("an empty job log cannot value the mitigation")
    benefit = float(np.mean([job.node_hours for job in jobs]))
    return MitigationParams(
        cost_per_mitigation=cost_per_mitigation,
        benefit_per_true_positive=benefit,
        training_cost=training_cost,
    )


def run_prediction(
    dataset: Dataset,
    neutron: NeutronSeries | None = None,
    target: Target | str = Target.UE_NEXT_DAY,
    tick: timedelta = timedelta(minutes=1),
    seed: int = 0,
    grid: dict[str, list] | None = None,
    undersample_ratio: float | None = None,
    permute_neutron: bool = False,
    mitigation: MitigationParams | None = None,
    threshold: float = 0.5,
    n_jobs: int = 1,
    alpha: float = 0.05,
) -> tuple[EvaluationReport, ForestModel]:
    """
    Build features, split, undersample, tune, retrain and evaluate a forest.

    Parameters
    ----------
    dataset
        Events and inventory.
    neutron
        Neutron series, the dataset one by default.
    target
        Prediction target.
    tick
        Time between two feature vectors of a DIMM.
    seed
        Seed of the undersampling, the permutation and the forest.
    grid
        Hyperparameter grid, see ``DEFAULT_GRID``.
    undersample_ratio
        Negatives kept per positive in the training set. Defaults to 1 for
        uncorrected errors and no undersampling for corrected errors.
    permute_neutron
        Train the reference model, with the neutron features permuted as a block.
    mitigation
        Cost-benefit parameters, uncorrected-error target only.
    threshold
        Score above which a row is predicted positive.
    n_jobs
        Number of threads growing the trees.
    alpha
        False discovery rate level of the correlation check between the
        neutron features and the others.
    """
    target = Target(target)
    data = build_dataset(dataset, neutron, target, tick)
    correlated = feature_correlations(data, "neutron", alpha)
    permuted = []
    if permute_neutron:
        data = permute_group(data, "neutron", seed)
        permuted.append("neutron")
    train, validation, test = split_chronological(data)
    if undersample_ratio is None and target == Target.UE_NEXT_DAY:
        undersample_ratio = 1.0
    if undersample_ratio is not None:
        train = undersample_majority(train, undersample_ratio, seed)
    params, _ = tune(train, validation, grid, seed, n_jobs)
    model = train_forest(LabeledDataset.concat(train, validation), params, seed, n_jobs)
    scores = model.predict_proba(test.features)
    auc = auc_score(test.labels, scores)
    predictions = scores >= threshold
    saved = None
    if target == Target.UE_NEXT_DAY:
        saved = cost_benefit(test.labels, predictions, mitigation or MitigationParams())
    report = EvaluationReport(
        target=target,
        auc=auc,
        group_importance=gini_group_importance(model),
        saved_node_hours=saved,
        params=params,
        seed=seed,
        permuted_groups=permuted,
        n_train=model.n_train,
        n_test=len(test),
        n_test_positives=test.n_positives,
        true_positives=int(np.sum(test.labels & predictions)),
        positive_predictions=int(np.sum(predictions)),
        correlated_features=correlated,
    )
    return report, model
