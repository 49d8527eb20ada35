"""Agreement between neutron monitors.

Two ground monitors far from each other should see the same cosmic ray
variations. A strong rank correlation between their window means supports
using a single distant monitor as a proxy for the machine site.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from cosmicdram.core.base import CDObject
from cosmicdram.core.data_objects import NeutronSeries, ObservationInterval
from cosmicdram.core.exceptions import EmptySampleError
from cosmicdram.stats import CorrelationResult, kendall_tau_b
from cosmicdram.timegrid import Granularity, Window, make_windows, window_neutron_means
from cosmicdram.utils import ceil_hour, floor_hour

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MonitorComparison(CDObject):
    monitor_a: str
    monitor_b: str
    granularity: Granularity
    result: CorrelationResult
    windows: list[Window] = field(default_factory=list)
    means_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    means_b: np.ndarray = field(default_factory=lambda: np.zeros(0))


def common_interval(series_a: NeutronSeries, series_b: NeutronSeries) -> ObservationInterval:
    """Whole-hour interval covered by both series."""
    if len(series_a) == 0 or len(series_b) == 0:
        raise EmptySampleError("cannot compare an empty neutron series")
    start = max(series_a.samples[0].timestamp, series_b.samples[0].timestamp)
    end = min(series_a.samples[-1].timestamp, series_b.samples[-1].timestamp)
    if end < start:
        raise EmptySampleError("the neutron series do not overlap")
    return ObservationInterval(floor_hour(start), ceil_hour(end + timedelta(seconds=1)))


def compare_monitors(
    series_a: NeutronSeries,
    series_b: NeutronSeries,
    granularity: Granularity | str = Granularity.DAY,
    interval: ObservationInterval | None = None,
) -> MonitorComparison:
    """
    Kendall tau-b between the window means of two neutron series.

    Only the windows where both monitors have samples are paired.

    Parameters
    ----------
    series_a, series_b
        The two monitor series.
    granularity
        Window size.
    interval
        Comparison interval, the common span of the series by default.
    """
    granularity = Granularity(granularity)
    interval = interval or common_interval(series_a, series_b)
    windows = make_windows(interval, granularity)
    means_a, _ = window_neutron_means(series_a, windows)
    means_b, _ = window_neutron_means(series_b, windows)
    keep = ~(np.isnan(means_a) | np.isnan(means_b))
    logger.info(
        "comparing monitors %r and %r on %d common windows",
        series_a.monitor_id,
        series_b.monitor_id,
        int(keep.sum()),
    )
    return MonitorComparison(
        monitor_a=series_a.monitor_id,
        monitor_b=series_b.monitor_id,
        granularity=granularity,
        result=kendall_tau_b(means_a[keep], means_b[keep]),
        windows=[w for w, k in zip(windows, keep) if k],
        means_a=means_a[keep],
        means_b=means_b[keep],
    )
