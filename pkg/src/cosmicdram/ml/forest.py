"""Random forest model and its text persistence.

Trees are grown with scikit-learn and then stored as plain node arrays, so
that a persisted model predicts and reports importances without depending on
the scikit-learn version that trained it.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from monty.json import MontyDecoder, MontyEncoder
from sklearn.ensemble import RandomForestClassifier

from cosmicdram.core.base import CDObject
from cosmicdram.core.exceptions import (
    ConfigurationError,
    DegenerateLabelsError,
    InvariantViolationError,
)
from cosmicdram.ml.features import LabeledDataset

logger = logging.getLogger(__name__)

LEAF = -1

DEFAULT_GRID = {
    "n_trees": [100, 300],
    "max_depth": [8, 16, None],
    "min_leaf": [1, 5],
}


@dataclass
class ForestParams(CDObject):
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigurationError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigurationError(f"max_depth must be >= 1 or None, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ConfigurationError(f"min_leaf must be >= 1, got {self.min_leaf}")


@dataclass(eq=False)
class TreeArrays(CDObject):
    """Binary tree stored as node arrays. Leaves have ``feature == -1``."""

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    score: np.ndarray
    """Fraction of positive training samples in the node."""

    impurity: np.ndarray
    n_samples: np.ndarray
    """Weighted number of training samples reaching the node."""

    def __post_init__(self):
        self.children_left = np.asarray(self.children_left, dtype=np.int64)
        self.children_right = np.asarray(self.children_right, dtype=np.int64)
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.score = np.asarray(self.score, dtype=float)
        self.impurity = np.asarray(self.impurity, dtype=float)
        self.n_samples = np.asarray(self.n_samples, dtype=float)

    @classmethod
    def from_estimator(cls, estimator, positive_index: int | None) -> TreeArrays:
        tree = estimator.tree_
        value = tree.value[:, 0, :]
        totals = value.sum(axis=1)
        if positive_index is None:
            score = np.zeros(tree.node_count)
        else:
            score = np.divide(
                value[:, positive_index], totals, out=np.zeros(tree.node_count), where=totals > 0
            )
        is_leaf = tree.children_left == LEAF
        return cls(
            children_left=tree.children_left,
            children_right=tree.children_right,
            feature=np.where(is_leaf, LEAF, tree.feature),
            threshold=np.where(is_leaf, 0.0, tree.threshold),
            score=score,
            impurity=tree.impurity,
            n_samples=tree.weighted_n_node_samples,
        )

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf reached by each row."""
        # Splits were learned on float32 features.
        X = np.asarray(X, dtype=np.float32).astype(float)
        nodes = np.zeros(len(X), dtype=np.int64)
        active = self.feature[nodes] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            current = nodes[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            nodes[rows] = np.where(
                go_left, self.children_left[current], self.children_right[current]
            )
            active[rows] = self.feature[nodes[rows]] != LEAF
        return nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.score[self.apply(X)]

    def impurity_decrease(self, n_features: int) -> np.ndarray:
        """Weighted Gini decrease per feature, normalized to sum to 1 (zeros for a stump)."""
        decrease = np.zeros(n_features)
        for node in np.flatnonzero(self.feature != LEAF):
            left, right = self.children_left[node], self.children_right[node]
            decrease[self.feature[node]] += (
                self.n_samples[node] * self.impurity[node]
                - self.n_samples[left] * self.impurity[left]
                - self.n_samples[right] * self.impurity[right]
            )
        decrease = np.clip(decrease, 0.0, None)
        total = decrease.sum()
        return decrease / total if total > 0 else decrease


@dataclass(eq=False)
class ForestModel(CDObject):
    trees: list[TreeArrays]
    feature_names: list[str]
    groups: dict[str, list[str]]
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0
    n_train: int = 0
    n_train_positives: int = 0

    def __post_init__(self):
        n_features = len(self.feature_names)
        grouped = {name for names in self.groups.values() for name in names}
        for tree in self.trees:
            used = tree.feature[tree.feature != LEAF]
            if np.any(used >= n_features):
                raise InvariantViolationError("split on a feature index outside the model")
            missing = {self.feature_names[i] for i in used} - grouped
            if missing:
                raise InvariantViolationError(f"split features without group: {sorted(missing)}")

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean positive score of the trees for each row."""
        X = np.asarray(X, dtype=float)
        if not self.trees:
            return np.zeros(len(X))
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)

    def feature_importance(self) -> np.ndarray:
        """Mean decrease in Gini impurity per feature, normalized to sum to 1."""
        n_features = len(self.feature_names)
        if not self.trees:
            return np.zeros(n_features)
        importance = np.mean([t.impurity_decrease(n_features) for t in self.trees], axis=0)
        total = importance.sum()
        return importance / total if total > 0 else importance

    def to_text(self) -> str:
        """Self-describing JSON text of the model."""
        return json.dumps(self.as_dict(), cls=MontyEncoder, sort_keys=True, indent=1)

    @classmethod
    def from_text(cls, text: str) -> ForestModel:
        model = json.loads(text, cls=MontyDecoder)
        if not isinstance(model, cls):
            raise ValueError("the text does not describe a forest model")
        return model


def train_forest(
    train: LabeledDataset,
    params: ForestParams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> ForestModel:
    """
    Grow a random forest: bootstrap samples, Gini splits and ``ceil(sqrt(p))``
    candidate features per split.

    The per-tree randomness derives from ``seed`` only, so the model does not
    depend on ``n_jobs``.
    """
    params = params or ForestParams()
    if len(train) == 0:
        raise DegenerateLabelsError("cannot train on an empty dataset")
    if train.n_positives == 0:
        logger.warning("training set without positive rows, the forest predicts 0")
    n_features = train.features.shape[1]
    classifier = RandomForestClassifier(
        n_estimators=params.n_trees,
        criterion="gini",
        max_depth=params.max_depth,
        min_samples_leaf=params.min_leaf,
        max_features=math.ceil(math.sqrt(n_features)),
        bootstrap=True,
        random_state=seed,
        n_jobs=n_jobs,
    )
    classifier.fit(train.features, train.labels)
    classes = list(classifier.classes_)
    positive_index = classes.index(True) if True in classes else None
    return ForestModel(
        trees=[TreeArrays.from_estimator(e, positive_index) for e in classifier.estimators_],
        feature_names=list(train.feature_names),
        groups={g: list(names) for g, names in train.groups.items()},
        params=params,
        seed=seed,
        n_train=len(train),
        n_train_positives=train.n_positives,
    )


def gini_group_importance(model: ForestModel) -> dict[str, float]:
    """
    Gini importance summed per feature group.

    The values are non-negative and sum to 1, or are all zero when no tree
    has a split.
    """
    importance = model.feature_importance()
    index = {name: i for i, name in enumerate(model.feature_names)}
    return {
        group: float(sum(importance[index[name]] for name in names))
        for group, names in model.groups.items()
    }
