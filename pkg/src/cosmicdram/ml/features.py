"""Per-(DIMM, tick) feature vectors for error prediction.

Features at a tick only use data with a timestamp at or before the tick.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np
import pandas as pd

from cosmicdram.core.base import CDEnum, CDObject
from cosmicdram.core.data_objects import (
    Dataset,
    NeutronSeries,
    ObservationInterval,
    UeCause,
)
from cosmicdram.core.exceptions import ConfigurationError
from cosmicdram.utils import to_epoch

logger = logging.getLogger(__name__)

HOUR = 3600
DAY = 24 * HOUR

# Trailing spans of the neutron features, in seconds.
NEUTRON_SPANS = {
    "1h": HOUR,
    "5h": 5 * HOUR,
    "10h": 10 * HOUR,
    "1d": DAY,
    "1w": 7 * DAY,
    "1m": 30 * DAY,
}

HISTORY_SPAN = DAY

FEATURE_GROUPS: dict[str, list[str]] = {
    "ce": ["ce_total", "ce_1d"],
    "ue": ["ue_total", "ue_1d"],
    "ue_warning": ["ue_warning_total", "ue_warning_1d"],
    "location": ["ranks", "banks", "rows", "columns"],
    "neutron": [
        f"neutron_{stat}_{span}"
        for span in NEUTRON_SPANS
        for stat in ("mean", "std", "pct")
    ],
}

FEATURE_NAMES = [name for names in FEATURE_GROUPS.values() for name in names]


class Target(CDEnum):
    UE_NEXT_DAY = "ue_next_day"
    CE_NEXT_HOUR = "ce_next_hour"

    @property
    def horizon(self) -> int:
        """Prediction horizon in seconds."""
        return DAY if self == Target.UE_NEXT_DAY else HOUR


@dataclass(eq=False)
class LabeledDataset(CDObject):
    """Feature matrix with one row per (DIMM, tick), in chronological order."""

    features: np.ndarray
    labels: np.ndarray
    ticks: np.ndarray
    """Epoch seconds of the tick of each row."""

    dimms: list[str] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=lambda: list(FEATURE_NAMES))
    groups: dict[str, list[str]] = field(default_factory=lambda: dict(FEATURE_GROUPS))

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, len(self.feature_names))
        self.labels = np.asarray(self.labels, dtype=bool)
        self.ticks = np.asarray(self.ticks, dtype=np.int64)
        self.dimms = list(self.dimms)
        n = len(self.features)
        if not len(self.labels) == len(self.ticks) == len(self.dimms) == n:
            raise ValueError("features, labels, ticks and dimms must have one entry per row")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_positives(self) -> int:
        return int(self.labels.sum())

    def group_columns(self, group: str) -> list[int]:
        if group not in self.groups:
            raise KeyError(f"unknown feature group {group!r}")
        return [self.feature_names.index(name) for name in self.groups[group]]

    def subset(self, rows: np.ndarray | Sequence[int]) -> LabeledDataset:
        rows = np.asarray(rows)
        return LabeledDataset(
            features=self.features[rows],
            labels=self.labels[rows],
            ticks=self.ticks[rows],
            dimms=[self.dimms[i] for i in np.arange(len(self))[rows]],
            feature_names=list(self.feature_names),
            groups=dict(self.groups),
        )

    @classmethod
    def concat(cls, first: LabeledDataset, second: LabeledDataset) -> LabeledDataset:
        return cls(
            features=np.vstack([first.features, second.features]),
            labels=np.concatenate([first.labels, second.labels]),
            ticks=np.concatenate([first.ticks, second.ticks]),
            dimms=first.dimms + second.dimms,
            feature_names=list(first.feature_names),
            groups=dict(first.groups),
        )


def make_ticks(interval: ObservationInterval, tick: timedelta) -> np.ndarray:
    """Tick instants ``start + k * tick`` inside the interval, the start excluded."""
    step = int(tick.total_seconds())
    if step < 1:
        raise ConfigurationError("the tick must be at least one second")
    start, end = to_epoch(interval.start), to_epoch(interval.end)
    return np.arange(start + step, end, step, dtype=np.int64)


def _cumulative(event_epochs: np.ndarray, weights: np.ndarray, ticks: np.ndarray) -> np.ndarray:
    """Weighted count of the events at or before each tick."""
    order = np.argsort(event_epochs, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(weights[order])])
    return cum[np.searchsorted(event_epochs[order], ticks, side="right")]


def _first_seen(keys: list, epochs: list[int]) -> np.ndarray:
    first: dict = {}
    for key, epoch in zip(keys, epochs):
        if key not in first or epoch < first[key]:
            first[key] = epoch
    return np.sort(np.array(list(first.values()), dtype=np.int64))


def _history_features(ce, ue, warnings, ticks: np.ndarray) -> np.ndarray:
    """Error-history columns for one DIMM: ce, ue, ue_warning and location groups."""
    columns = []
    for events in (ce, ue, warnings):
        epochs = np.array([to_epoch(e.timestamp) for e in events], dtype=np.int64)
        weights = np.array([e.multiplicity for e in events], dtype=float)
        total = _cumulative(epochs, weights, ticks)
        before = _cumulative(epochs, weights, ticks - HISTORY_SPAN)
        columns += [total, total - before]
    located = [e for e in ce if e.located]
    located_epochs = [to_epoch(e.timestamp) for e in located]
    for key in (
        lambda e: e.rank,
        lambda e: (e.rank, e.bank),
        lambda e: (e.rank, e.bank, e.row),
        lambda e: (e.rank, e.bank, e.column),
    ):
        first = _first_seen([key(e) for e in located], located_epochs)
        columns.append(np.searchsorted(first, ticks, side="right").astype(float))
    return np.column_stack(columns) if len(ticks) else np.zeros((0, len(columns)))


def neutron_features(neutron: NeutronSeries, ticks: np.ndarray) -> np.ndarray:
    """
    Mean, standard deviation and percentage variation of the neutron rate
    over each trailing span, as seen at the last sample at or before a tick.

    The percentage variation is ``(last - first) / first`` over the span, 0
    when the first value is 0. Ticks before the first sample get zeros.
    """
    n_columns = len(FEATURE_GROUPS["neutron"])
    if len(neutron) == 0:
        return np.zeros((len(ticks), n_columns))
    series = neutron.to_series()
    epochs = neutron.epochs
    rates = neutron.rates
    per_sample = []
    for span in NEUTRON_SPANS.values():
        rolling = series.rolling(pd.Timedelta(seconds=span), closed="right")
        mean = rolling.mean().to_numpy()
        std = rolling.std(ddof=0).fillna(0.0).to_numpy()
        first = rates[np.searchsorted(epochs, epochs - span, side="right")]
        with np.errstate(divide="ignore", invalid="ignore"):
            pct = np.where(first != 0, (rates - first) / first, 0.0)
        per_sample += [mean, std, pct]
    table = np.column_stack(per_sample)
    last = np.searchsorted(epochs, ticks, side="right") - 1
    out = np.zeros((len(ticks), n_columns))
    seen = last >= 0
    out[seen] = table[last[seen]]
    return out


def _labels(events, ticks: np.ndarray, horizon: int) -> np.ndarray:
    epochs = np.sort(np.array([to_epoch(e.timestamp) for e in events], dtype=np.int64))
    following = np.searchsorted(epochs, ticks, side="right")
    labels = np.zeros(len(ticks), dtype=bool)
    has_next = following < len(epochs)
    labels[has_next] = epochs[following[has_next]] <= ticks[has_next] + horizon
    return labels


def build_dataset(
    dataset: Dataset,
    neutron: NeutronSeries | None = None,
    target: Target | str = Target.UE_NEXT_DAY,
    tick: timedelta = timedelta(minutes=1),
    interval: ObservationInterval | None = None,
) -> LabeledDataset:
    """
    Feature vectors of every DIMM of the inventory at every tick.

    Parameters
    ----------
    dataset
        Events and inventory.
    neutron
        Neutron series, the dataset one by default.
    target
        ``ue_next_day``: an uncorrected error (warnings excluded) occurs on
        the DIMM within the next day. ``ce_next_hour``: a corrected error
        occurs within the next hour.
    tick
        Time between two feature vectors of a DIMM.
    interval
        Observation interval, the dataset one by default.

    Returns
    -------
    LabeledDataset
        Rows sorted by tick, then by DIMM id.
    """
    target = Target(target)
    neutron = neutron if neutron is not None else (dataset.neutron or NeutronSeries())
    interval = interval or dataset.observation_interval()
    ticks = make_ticks(interval, tick)
    dimms = dataset.topology.dimm_ids
    by_dimm: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for event in dataset.ce_events:
        by_dimm[event.dimm]["ce"].append(event)
    for event in dataset.ue_events:
        kind = "warning" if event.cause == UeCause.UE_WARNING else "ue"
        by_dimm[event.dimm][kind].append(event)

    n_ticks, n_dimms = len(ticks), len(dimms)
    logger.info("building %d feature vectors (%d DIMMs x %d ticks)", n_ticks * n_dimms, n_dimms, n_ticks)
    n_history = sum(len(FEATURE_GROUPS[g]) for g in ("ce", "ue", "ue_warning", "location"))
    history = np.zeros((n_ticks, n_dimms, n_history))
    labels = np.zeros((n_ticks, n_dimms), dtype=bool)
    for j, dimm in enumerate(dimms):
        events = by_dimm.get(dimm, {})
        history[:, j, :] = _history_features(
            events.get("ce", []), events.get("ue", []), events.get("warning", []), ticks
        )
        targets = events.get("ue", []) if target == Target.UE_NEXT_DAY else events.get("ce", [])
        labels[:, j] = _labels(targets, ticks, target.horizon)
    neutron_block = np.repeat(neutron_features(neutron, ticks)[:, None, :], n_dimms, axis=1)
    features = np.concatenate([history, neutron_block], axis=2).reshape(n_ticks * n_dimms, -1)
    return LabeledDataset(
        features=features,
        labels=labels.reshape(-1),
        ticks=np.repeat(ticks, n_dimms),
        dimms=dimms * n_ticks,
    )


def split_chronological(
    data: LabeledDataset, fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """
    Train, validation and test sets cut at tick boundaries, without shuffling.

    All the rows of a tick go to the same set.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ConfigurationError(f"invalid split fractions {fractions}")
    unique_ticks = np.unique(data.ticks)
    n = len(unique_ticks)
    first_cut = int(round(fractions[0] * n))
    second_cut = int(round((fractions[0] + fractions[1]) * n))
    position = np.searchsorted(unique_ticks, data.ticks)
    return (
        data.subset(position < first_cut),
        data.subset((position >= first_cut) & (position < second_cut)),
        data.subset(position >= second_cut),
    )


def undersample_majority(train: LabeledDataset, ratio: float = 1.0, seed: int = 0) -> LabeledDataset:
    """
    Keep every positive row and ``ceil(ratio * positives)`` random negative rows.

    The kept rows stay in chronological order.
    """
    if ratio <= 0:
        raise ConfigurationError(f"undersampling ratio must be positive, got {ratio}")
    positives = np.flatnonzero(train.labels)
    negatives = np.flatnonzero(~train.labels)
    if len(positives) == 0:
        logger.warning("no positive row in the training set, undersampling skipped")
        return train
    n_kept = min(len(negatives), math.ceil(ratio * len(positives)))
    rng = np.random.default_rng(seed)
    kept = rng.choice(negatives, size=n_kept, replace=False)
    logger.info("undersampling: %d positives, %d of %d negatives kept", len(positives), n_kept, len(negatives))
    return train.subset(np.sort(np.concatenate([positives, kept])))


def permute_group(data: LabeledDataset, group: str = "neutron", seed: int = 0) -> LabeledDataset:
    """
    Copy of a dataset with the columns of a feature group jointly row-permuted.

    One permutation is drawn for the whole group, so the joint distribution
    of the group columns is kept while their link with the labels is broken.
    """
    columns = data.group_columns(group)
    permutation = np.random.default_rng(seed).permutation(len(data))
    features = data.features.copy()
    features[:, columns] = data.features[permutation][:, columns]
    return LabeledDataset(
        features=features,
        labels=data.labels.copy(),
        ticks=data.ticks.copy(),
        dimms=list(data.dimms),
        feature_names=list(data.feature_names),
        groups=dict(data.groups),
    )
