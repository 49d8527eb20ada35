"""Calendar windows, error aggregation and alignment with the neutron series.

All instants are handled as seconds since the epoch (UTC) once they enter
this module; windows are half-open ``[start, end)`` intervals.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any

import numpy as np
import pandas as pd

from cosmicdram.classify import classify_bit_width, label_events
from cosmicdram.core.base import CDEnum, CDObject
from cosmicdram.core.data_objects import (
    CorrectedErrorEvent,
    NeutronSeries,
    ObservationInterval,
    ScanExposureRecord,
    Scope,
    ScopeKind,
    ScrubberErrorEvent,
    Topology,
    UncorrectedErrorEvent,
)
from cosmicdram.utils import epoch_array, to_epoch, to_utc

logger = logging.getLogger(__name__)

FRAME_COLUMNS = ["epoch", "node", "dimm", "rack", "socket", "weight"]


class Granularity(CDEnum):
    HOUR = "hour"
    DAY = "day"
    WEEK = "week"
    MONTH = "month"

    @property
    def freq(self) -> str:
        """pandas period alias. Weeks end on Sunday, i.e. start on Monday."""
        return {"hour": "h", "day": "D", "week": "W-SUN", "month": "M"}[self.value]


class Metric(CDEnum):
    EVENT_COUNT = "event_count"
    """Sum of the multiplicities of the matching events."""

    DIMM_COUNT = "dimm_count"
    """Number of distinct DIMMs with at least one matching event."""


@dataclass(frozen=True)
class Window(CDObject):
    granularity: Granularity
    start: datetime
    end: datetime
    clipped: bool = False
    """Whether the window was cut by the observation interval."""

    @property
    def start_epoch(self) -> int:
        return to_epoch(self.start)

    @property
    def end_epoch(self) -> int:
        return to_epoch(self.end)


@dataclass(eq=False)
class CountSeries(CDObject):
    windows: list[Window] = field(default_factory=list)
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.windows):
            raise ValueError("one value per window is required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("count series values must be finite")

    def __len__(self) -> int:
        return len(self.windows)


@dataclass(eq=False)
class PairedSeries(CDObject):
    """Windows with both a neutron mean rate and an error value."""

    windows: list[Window] = field(default_factory=list)
    neutron: np.ndarray = field(default_factory=lambda: np.zeros(0))
    errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.neutron = np.asarray(self.neutron, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        if not len(self.windows) == len(self.neutron) == len(self.errors):
            raise ValueError("paired series sides must have equal length")

    def __len__(self) -> int:
        return len(self.windows)

    def drop_zero_errors(self) -> PairedSeries:
        keep = self.errors != 0
        return PairedSeries(
            windows=[w for w, k in zip(self.windows, keep) if k],
            neutron=self.neutron[keep],
            errors=self.errors[keep],
        )


@dataclass(eq=False)
class Heatmap(CDObject):
    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray
    """Number of windows per (x bin, y bin)."""

    y_log: bool = False


def _naive_utc(dt: datetime) -> pd.Timestamp:
    return pd.Timestamp(to_utc(dt)).tz_localize(None)


def make_windows(
    interval: ObservationInterval,
    granularity: Granularity | str,
    exclude_partial: bool = False,
) -> list[Window]:
    """
    Calendar-aligned windows covering an observation interval.

    The first and last windows are clipped to the interval and flagged as
    such. Hours start at minute 0, weeks on Monday 00:00 UTC (ISO weeks) and
    months on day 1.

    Parameters
    ----------
    interval
        Observation interval, half-open.
    granularity
        Window size.
    exclude_partial
        Drop the clipped windows.
    """
    granularity = Granularity(granularity)
    if interval.start >= interval.end:
        return []
    start = _naive_utc(interval.start)
    end = _naive_utc(interval.end)
    periods = pd.period_range(
        pd.Period(start, freq=granularity.freq),
        pd.Period(end - pd.Timedelta(seconds=1), freq=granularity.freq),
        freq=granularity.freq,
    )
    period_starts = periods.start_time
    period_ends = (periods + 1).start_time
    windows = []
    for p_start, p_end in zip(period_starts, period_ends):
        w_start = max(p_start, start)
        w_end = min(p_end, end)
        windows.append(
            Window(
                granularity=granularity,
                start=to_utc(w_start.to_pydatetime()),
                end=to_utc(w_end.to_pydatetime()),
                clipped=bool(w_start != p_start or w_end != p_end),
            )
        )
    if exclude_partial:
        windows = drop_partial_windows(windows)
    return windows


def drop_partial_windows(windows: Sequence[Window]) -> list[Window]:
    return [w for w in windows if not w.clipped]


def window_bounds(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    starts = np.array([w.start_epoch for w in windows], dtype=np.int64)
    ends = np.array([w.end_epoch for w in windows], dtype=np.int64)
    return starts, ends


def window_index(epochs: np.ndarray, windows: Sequence[Window]) -> np.ndarray:
    """Index of the window containing each instant, -1 when outside all windows."""
    starts, ends = window_bounds(windows)
    if len(starts) == 0:
        return np.full(len(epochs), -1, dtype=np.int64)
    idx = np.searchsorted(starts, epochs, side="right") - 1
    inside = idx >= 0
    inside[inside] = epochs[inside] < ends[idx[inside]]
    return np.where(inside, idx, -1)


def event_frame(
    events: Sequence[CorrectedErrorEvent | UncorrectedErrorEvent | ScrubberErrorEvent],
    topology: Topology | None = None,
) -> pd.DataFrame:
    """
    Columnar view of the events, with their scope ids and category labels.

    Every frame has the columns ``epoch``, ``node``, ``dimm``, ``rack``,
    ``socket`` and ``weight`` (the multiplicity). Corrected errors add
    ``manufacturer``, ``technology``, ``detection``, ``transient`` and
    ``single_cell``; uncorrected errors add ``manufacturer``, ``technology``
    and ``cause``; scrubber errors add ``bit_class``. Labels that cannot be
    derived are None, and they only match unfiltered ("All") categories.
    """
    topology = topology or Topology()
    if not events:
        return pd.DataFrame({c: pd.Series(dtype=object) for c in FRAME_COLUMNS}).astype(
            {"epoch": np.int64, "weight": np.int64}
        )
    columns: dict[str, list[Any]] = {c: [] for c in FRAME_COLUMNS}
    first = events[0]
    if any(type(event) is not type(first) for event in events):
        raise TypeError("events of different types cannot share a frame")
    if isinstance(first, CorrectedErrorEvent):
        extra = ["manufacturer", "technology", "detection", "transient", "single_cell"]
        labels = label_events(events, topology)
    elif isinstance(first, UncorrectedErrorEvent):
        extra = ["manufacturer", "technology", "cause"]
    elif isinstance(first, ScrubberErrorEvent):
        extra = ["bit_class"]
    else:
        raise TypeError(f"unsupported event type {type(first).__name__}")
    columns.update({c: [] for c in extra})
    for i, event in enumerate(events):
        dimm = getattr(event, "dimm", None)
        record = topology.get(dimm) if dimm is not None else None
        columns["epoch"].append(to_epoch(event.timestamp))
        columns["node"].append(event.node)
        columns["dimm"].append(dimm)
        columns["rack"].append(
            record.rack if record is not None else topology.rack_of_node(event.node)
        )
        columns["socket"].append(record.socket if record is not None else None)
        columns["weight"].append(event.multiplicity)
        if isinstance(event, CorrectedErrorEvent):
            category = labels[i].category
            columns["manufacturer"].append(category.manufacturer.value)
            columns["technology"].append(category.technology.token)
            columns["detection"].append(category.detection.value)
            columns["transient"].append(category.transient)
            columns["single_cell"].append(category.single_cell)
        elif isinstance(event, UncorrectedErrorEvent):
            columns["manufacturer"].append(
                record.manufacturer.value if record else "unknown"
            )
            columns["technology"].append(record.technology.token if record else "unknown")
            columns["cause"].append(event.cause.value)
        else:
            columns["bit_class"].append(classify_bit_width(event).value)
    frame = pd.DataFrame(columns)
    frame["epoch"] = frame["epoch"].astype(np.int64)
    frame["weight"] = frame["weight"].astype(np.int64)
    return frame


def scope_mask(frame: pd.DataFrame, scope: Scope) -> np.ndarray:
    if scope.kind == ScopeKind.SYSTEM:
        return np.ones(len(frame), dtype=bool)
    return (frame[scope.kind.value] == scope.id).to_numpy()


def filter_mask(frame: pd.DataFrame, filters: Mapping[str, Any] | None) -> np.ndarray:
    """
    Rows matching every (column, value) pair. An empty mapping matches all.

    A set of values matches any of its members. A column missing from the
    frame (frame of an empty event list) matches nothing.
    """
    mask = np.ones(len(frame), dtype=bool)
    for column, value in (filters or {}).items():
        if column not in frame.columns:
            mask[:] = False
        elif isinstance(value, (set, frozenset)):
            mask &= frame[column].isin(value).to_numpy(dtype=bool)
        else:
            mask &= (frame[column] == value).to_numpy(dtype=bool)
    return mask


def aggregate(
    events: Sequence | pd.DataFrame,
    windows: Sequence[Window],
    scope: Scope | None = None,
    filters: Mapping[str, Any] | None = None,
    metric: Metric | str = Metric.EVENT_COUNT,
    topology: Topology | None = None,
) -> CountSeries:
    """
    Error metric per window for the events matching a scope and a category filter.

    Parameters
    ----------
    events
        Events or an :func:`event_frame` built from them.
    windows
        Windows to aggregate over. Events outside every window are ignored.
    scope
        System scope, the whole system by default.
    filters
        Mapping of frame column to required value, e.g. ``{"manufacturer": "A"}``.
    metric
        ``event_count`` sums the multiplicities, ``dimm_count`` counts the
        distinct DIMMs with at least one matching event.
    topology
        Inventory used to resolve scopes and categories when ``events`` is a list.
    """
    metric = Metric(metric)
    frame = events if isinstance(events, pd.DataFrame) else event_frame(events, topology)
    mask = filter_mask(frame, filters)
    if scope is not None:
        mask &= scope_mask(frame, scope)
    epochs = frame["epoch"].to_numpy(dtype=np.int64)[mask]
    idx = window_index(epochs, windows)
    inside = idx >= 0
    n = len(windows)
    if metric == Metric.EVENT_COUNT:
        weights = frame["weight"].to_numpy(dtype=float)[mask][inside]
        values = np.bincount(idx[inside], weights=weights, minlength=n)
    else:
        dimms = frame["dimm"].to_numpy(dtype=object)[mask][inside]
        pairs = {(i, d) for i, d in zip(idx[inside].tolist(), dimms) if d is not None}
        values = np.bincount(
            np.fromiter((i for i, _ in pairs), dtype=np.int64, count=len(pairs)),
            minlength=n,
        )
    return CountSeries(windows=list(windows), values=values.astype(float))


def window_neutron_means(
    neutron: NeutronSeries, windows: Sequence[Window]
) -> tuple[np.ndarray, np.ndarray]:
    """Mean neutron rate and number of samples per window (mean is NaN without samples)."""
    epochs = neutron.epochs
    rates = neutron.rates
    starts, ends = window_bounds(windows)
    lo = np.searchsorted(epochs, starts, side="left")
    hi = np.searchsorted(epochs, ends, side="left")
    counts = hi - lo
    means = np.full(len(windows), np.nan)
    for i in np.flatnonzero(counts):
        means[i] = rates[lo[i] : hi[i]].mean()
    return means, counts


def align(neutron: NeutronSeries, counts: CountSeries) -> PairedSeries:
    """
    Pair each window's error value with the mean neutron rate of the window.

    Windows without any neutron sample are dropped from both sides.
    """
    means, n_samples = window_neutron_means(neutron, counts.windows)
    keep = n_samples > 0
    return PairedSeries(
        windows=[w for w, k in zip(counts.windows, keep) if k],
        neutron=means[keep],
        errors=counts.values[keep],
    )


def normalize_by_exposure(
    counts: CountSeries,
    exposure: Sequence[ScanExposureRecord],
    nodes: set[str] | None = None,
) -> tuple[CountSeries, list[Window]]:
    """
    Errors per scanned megabyte.

    The memory scanned in a window is the sum over the exposure records of
    their megabytes, split proportionally to the time overlap of the record
    with the window. Windows where no memory was scanned are dropped and
    returned separately.

    Parameters
    ----------
    counts
        Error counts per window.
    exposure
        Scrubber exposure records.
    nodes
        Restrict the exposure to these nodes (for node scopes).

    Returns
    -------
    (CountSeries, list of Window)
        The normalized series and the dropped windows.
    """
    records = [r for r in exposure if nodes is None or r.node in nodes]
    starts, ends = window_bounds(counts.windows)
    scanned = np.zeros(len(counts.windows))
    if records and len(starts):
        rec_start = epoch_array(r.interval_start for r in records)
        rec_end = epoch_array(r.interval_end for r in records)
        mb = np.array([r.mb_scanned for r in records], dtype=float)
        duration = (rec_end - rec_start).astype(float)
        first = np.searchsorted(ends, rec_start, side="right")
        last = np.searchsorted(starts, rec_end, side="left") - 1
        span = 0
        while True:
            i = first + span
            active = i <= last
            if not active.any():
                break
            i = i[active]
            overlap = np.minimum(rec_end[active], ends[i]) - np.maximum(
                rec_start[active], starts[i]
            )
            share = mb[active] * np.clip(overlap, 0, None) / duration[active]
            np.add.at(scanned, i, share)
            span += 1
    keep = scanned > 0
    dropped = [w for w, k in zip(counts.windows, keep) if not k]
    if dropped:
        logger.info("%d windows without scanned memory dropped", len(dropped))
    normalized = CountSeries(
        windows=[w for w, k in zip(counts.windows, keep) if k],
        values=counts.values[keep] / scanned[keep],
    )
    return normalized, dropped


def _hours_of_day(epochs: np.ndarray, utc_offset: float) -> np.ndarray:
    shifted = epochs + int(round(utc_offset * 3600))
    return (shifted // 3600) % 24


def hour_of_day_profile(
    events: Sequence | pd.DataFrame, utc_offset: float = 0.0
) -> np.ndarray:
    """Total error count (multiplicity weighted) per hour of the day."""
    frame = events if isinstance(events, pd.DataFrame) else event_frame(events)
    hours = _hours_of_day(frame["epoch"].to_numpy(dtype=np.int64), utc_offset)
    return np.bincount(
        hours, weights=frame["weight"].to_numpy(dtype=float), minlength=24
    ).astype(float)


def neutron_hour_of_day_profile(
    neutron: NeutronSeries, utc_offset: float = 0.0
) -> np.ndarray:
    """Mean neutron rate per hour of the day, NaN for hours without samples."""
    hours = _hours_of_day(neutron.epochs, utc_offset)
    sums = np.bincount(hours, weights=neutron.rates, minlength=24)
    counts = np.bincount(hours, minlength=24)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def _exclusion_key(event) -> str:
    dimm = getattr(event, "dimm", None)
    return dimm if dimm is not None else event.node


def exclude_top_dimms(events: Sequence, fraction: float) -> tuple[list, list[str]]:
    """
    Remove the DIMMs with the highest error counts.

    DIMMs are ranked by their multiplicity weighted error count and the
    ``ceil(fraction * number of DIMMs)`` first ones are removed, ties being
    broken by ascending DIMM id. Scrubber events, which carry no DIMM id, are
    keyed by node.

    Returns
    -------
    (list, list of str)
        The remaining events and the excluded DIMM ids.
    """
    if not 0 <= fraction < 1:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    totals: Counter[str] = Counter()
    for event in events:
        totals[_exclusion_key(event)] += event.multiplicity
    n_excluded = math.ceil(round(fraction * len(totals), 9))
    ranked = sorted(totals.items(), key=lambda item: (-item[1], item[0]))
    excluded = [key for key, _ in ranked[:n_excluded]]
    excluded_set = set(excluded)
    kept = [e for e in events if _exclusion_key(e) not in excluded_set]
    return kept, excluded


def heatmap_bins(
    paired: PairedSeries, x_bins: int, y_bins: int, y_log: bool = False
) -> Heatmap:
    """
    2D histogram of the windows over (neutron mean, error value).

    With ``y_log`` the error axis is binned on ``log10(1 + y)`` so that
    zero-error windows keep a bin; the returned edges are in error units.
    """
    if x_bins < 1 or y_bins < 1:
        raise ValueError("bin counts must be positive")
    y = np.log10(1.0 + paired.errors) if y_log else paired.errors
    counts, x_edges, y_edges = np.histogram2d(paired.neutron, y, bins=(x_bins, y_bins))
    if y_log:
        y_edges = np.power(10.0, y_edges) - 1.0
    return Heatmap(x_edges=x_edges, y_edges=y_edges, counts=counts.astype(int), y_log=y_log)


def monthly_trend(windows: Sequence[Window], values: np.ndarray) -> np.ndarray:
    """Mean of the values over the windows of each calendar month, per window."""
    values = np.asarray(values, dtype=float)
    months = [(w.start.year, w.start.month) for w in windows]
    frame = pd.DataFrame({"month": months, "value": values})
    return frame.groupby("month")["value"].transform("mean").to_numpy(dtype=float)
