"""Enumeration and execution of the correlation test suites.

A suite covers every combination of error categories, window granularities
and system scopes of an error class. Specs whose scope holds no DIMM of the
requested category, or whose error series is constant, are rejected before
testing and reported with their status.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
import math
from collections import Counter
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from cosmicdram.core.base import CDEnum, CDObject
from cosmicdram.core.data_objects import (
    Dataset,
    NeutronSeries,
    ObservationInterval,
    Scope,
    ScopeKind,
    TestStatus,
    Topology,
)
from cosmicdram.core.exceptions import InvalidSpecError, InvariantViolationError
from cosmicdram.stats import (
    CorrelationResult,
    KsResult,
    by_adjust,
    kendall_tau_b,
    ks_two_sample,
    partition_by_threshold,
    percentile,
)
from cosmicdram.timegrid import (
    CountSeries,
    Granularity,
    Metric,
    PairedSeries,
    aggregate,
    event_frame,
    make_windows,
    normalize_by_exposure,
    window_neutron_means,
)

logger = logging.getLogger(__name__)

ALL = "All"

MANUFACTURERS = ("A", "B", "C", ALL)
TECHNOLOGIES = ("3x", "2y", "2z", ALL)
TRANSIENCES = ("transient", "non_transient", ALL)
DETECTIONS = ("memory_read", "patrol_scrub", ALL)
CELLS = ("single", "multi", ALL)
METRICS = (Metric.EVENT_COUNT, Metric.DIMM_COUNT)
UE_CAUSES = ("uncorrected_ecc", "scrub_failed", ALL)
BIT_CLASSES = ("1", "2", "3", "4", "5", "6+", ALL)
GRANULARITIES = (Granularity.HOUR, Granularity.DAY, Granularity.WEEK, Granularity.MONTH)

DEFAULT_PERCENTILES = (90.0, 95.0, 99.0, 99.9)
DEFAULT_ALPHA = 0.05
STRONG_CORRELATION = 0.5

TABLE_HEADER = (
    "error_class",
    "manufacturer",
    "technology",
    "transience",
    "detection",
    "cell",
    "metric",
    "ue_cause",
    "bit_class",
    "window",
    "scope_kind",
    "scope_id",
    "kind",
    "percentile",
    "n",
    "stat",
    "p_raw",
    "p_adj",
    "status",
)


class ErrorClass(CDEnum):
    CE = "CE"
    UE = "UE"
    MB = "MB"


class TestKind(CDEnum):
    __test__ = False

    KENDALL = "kendall"
    KS = "ks"


# Filter domains of each error class, in enumeration order.
CLASS_FILTERS: dict[ErrorClass, dict[str, tuple]] = {
    ErrorClass.CE: {
        "manufacturer": MANUFACTURERS,
        "technology": TECHNOLOGIES,
        "transience": TRANSIENCES,
        "detection": DETECTIONS,
        "cell": CELLS,
        "metric": METRICS,
    },
    ErrorClass.UE: {
        "manufacturer": MANUFACTURERS,
        "technology": TECHNOLOGIES,
        "ue_cause": UE_CAUSES,
    },
    ErrorClass.MB: {"bit_class": BIT_CLASSES},
}

CLASS_GRANULARITIES: dict[ErrorClass, tuple[Granularity, ...]] = {
    ErrorClass.CE: GRANULARITIES,
    ErrorClass.UE: GRANULARITIES,
    ErrorClass.MB: GRANULARITIES[1:],
}

FILTER_NAMES = ("manufacturer", "technology", "transience", "detection", "cell", "metric", "ue_cause", "bit_class")


@dataclass(frozen=True)
class TestSpec(CDObject):
    """One test of a suite: categories, window granularity and scope."""

    __test__ = False

    error_class: ErrorClass
    window: Granularity
    scope: Scope = field(default_factory=Scope.system)
    manufacturer: str | None = None
    technology: str | None = None
    transience: str | None = None
    detection: str | None = None
    cell: str | None = None
    metric: Metric | None = None
    ue_cause: str | None = None
    bit_class: str | None = None

    def __post_init__(self):
        domains = CLASS_FILTERS[self.error_class]
        for name in FILTER_NAMES:
            value = getattr(self, name)
            if name in domains:
                if value not in domains[name]:
                    raise InvalidSpecError(
                        f"{name}={value!r} is not a {self.error_class.value} filter value"
                    )
            elif value is not None:
                raise InvalidSpecError(
                    f"{name} does not apply to {self.error_class.value} errors"
                )
        if self.window not in CLASS_GRANULARITIES[self.error_class]:
            raise InvalidSpecError(
                f"{self.window.value} windows are not tested for {self.error_class.value} errors"
            )

    def filters(self) -> dict[str, Any]:
        """Column filters of :func:`cosmicdram.timegrid.aggregate` for this spec."""
        filters: dict[str, Any] = {}
        if self.manufacturer not in (None, ALL):
            filters["manufacturer"] = self.manufacturer
        if self.technology not in (None, ALL):
            filters["technology"] = self.technology
        if self.transience not in (None, ALL):
            filters["transient"] = self.transience == "transient"
        if self.detection not in (None, ALL):
            filters["detection"] = self.detection
        if self.cell not in (None, ALL):
            filters["single_cell"] = self.cell == "single"
        if self.error_class == ErrorClass.UE:
            if self.ue_cause == ALL:
                filters["cause"] = frozenset({"uncorrected_ecc", "scrub_failed"})
            else:
                filters["cause"] = self.ue_cause
        if self.bit_class not in (None, ALL):
            filters["bit_class"] = self.bit_class
        return filters

    @property
    def sort_key(self) -> tuple:
        domains = CLASS_FILTERS[self.error_class]
        positions = tuple(
            domains[name].index(getattr(self, name)) if name in domains else -1
            for name in FILTER_NAMES
        )
        return (
            list(ErrorClass).index(self.error_class),
            *positions,
            GRANULARITIES.index(self.window),
            *self.scope.sort_key,
        )

    def row(self) -> dict[str, str]:
        """The spec columns of the suite table."""
        row = {name: _cell(getattr(self, name)) for name in FILTER_NAMES}
        row.update(
            error_class=self.error_class.value,
            window=self.window.value,
            scope_kind=self.scope.kind.value,
            scope_id=self.scope.id or "",
        )
        return row


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, CDEnum):
        return value.value
    return str(value)


@dataclass(frozen=True)
class TestOutcome(CDObject):
    __test__ = False

    spec: TestSpec
    kind: TestKind
    result: CorrelationResult | KsResult
    percentile: float | None = None
    """Neutron percentile of the high/rest partition, KS only."""

    p_adj: float | None = None

    def __post_init__(self):
        if self.p_adj is not None and self.result.status != TestStatus.OK:
            raise ValueError("only ok outcomes have an adjusted p-value")
        if (self.percentile is not None) != (self.kind == TestKind.KS):
            raise ValueError("a percentile is given for KS outcomes and only for them")

    @property
    def status(self) -> TestStatus:
        return self.result.status

    @property
    def stat(self) -> float | None:
        return self.result.stat

    @property
    def direction(self) -> int | None:
        return self.result.direction if isinstance(self.result, KsResult) else None

    @property
    def sort_key(self) -> tuple:
        return (
            self.spec.sort_key,
            list(TestKind).index(self.kind),
            -1.0 if self.percentile is None else self.percentile,
        )


@dataclass(frozen=True)
class RejectedSpec(CDObject):
    spec: TestSpec
    status: TestStatus


@dataclass
class FeasibilityReport(CDObject):
    feasible: list[TestSpec] = field(default_factory=list)
    rejected: list[RejectedSpec] = field(default_factory=list)

    @property
    def tally(self) -> dict[str, int]:
        counts = Counter(r.status.value for r in self.rejected)
        counts["feasible"] = len(self.feasible)
        return dict(sorted(counts.items()))


@dataclass
class SignificantOutcome(CDObject):
    outcome: TestOutcome
    band: str
    """``moderate/high`` when the statistic magnitude is at least 0.5, ``low`` otherwise."""


@dataclass
class SuiteSummary(CDObject):
    coefficients: list[float] = field(default_factory=list)
    """Statistics of the ok outcomes, in ascending order."""

    raw_histogram: list[int] = field(default_factory=list)
    adjusted_histogram: list[int] = field(default_factory=list)
    status_tally: dict[str, int] = field(default_factory=dict)
    significant: list[SignificantOutcome] = field(default_factory=list)
    concentration: dict[str, int] = field(default_factory=dict)
    """Number of significant outcomes per scope, most frequent first."""

    direction_tally: dict[str, int] = field(default_factory=dict)
    """Significant KS outcomes by direction of the high-neutron sample."""

    alpha: float = DEFAULT_ALPHA

    @property
    def n_negative(self) -> int:
        return sum(1 for c in self.coefficients if c < 0)

    @property
    def n_non_negative(self) -> int:
        return len(self.coefficients) - self.n_negative


def _default_scope_kinds(error_class: ErrorClass, include_dimms: bool) -> list[ScopeKind]:
    if error_class == ErrorClass.MB:
        return [ScopeKind.SYSTEM]
    kinds = [ScopeKind.SYSTEM, ScopeKind.RACK, ScopeKind.NODE, ScopeKind.SOCKET]
    if include_dimms:
        kinds.append(ScopeKind.DIMM)
    return kinds


def iter_specs(
    error_class: ErrorClass | str,
    topology: Topology,
    include_dimms: bool = False,
    scope_kinds: Sequence[ScopeKind] | None = None,
) -> Iterator[TestSpec]:
    """
    Lazily enumerate the test space of an error class, in sort order.

    Scrubber (MB) errors are only tested at the system scope unless
    ``scope_kinds`` says otherwise.
    """
    error_class = ErrorClass(error_class)
    domains = CLASS_FILTERS[error_class]
    kinds = list(scope_kinds) if scope_kinds else _default_scope_kinds(error_class, include_dimms)
    scopes = topology.scopes(kinds)
    names = list(domains)
    for values in itertools.product(*domains.values()):
        filters = dict(zip(names, values))
        for window in CLASS_GRANULARITIES[error_class]:
            for scope in scopes:
                yield TestSpec(error_class=error_class, window=window, scope=scope, **filters)


def enumerate_specs(
    error_class: ErrorClass | str,
    topology: Topology,
    include_dimms: bool = False,
    scope_kinds: Sequence[ScopeKind] | None = None,
) -> list[TestSpec]:
    """
    All the test specs of an error class over a topology.

    Parameters
    ----------
    error_class
        CE, UE or MB.
    topology
        Inventory providing the racks, nodes, sockets (and DIMMs).
    include_dimms
        Also test at the DIMM scope.
    scope_kinds
        Explicit list of scope kinds, overriding the defaults.
    """
    return list(iter_specs(error_class, topology, include_dimms, scope_kinds))


def count_specs(
    error_class: ErrorClass | str,
    topology: Topology,
    include_dimms: bool = False,
    scope_kinds: Sequence[ScopeKind] | None = None,
) -> int:
    """Size of the test space, without enumerating it."""
    error_class = ErrorClass(error_class)
    kinds = list(scope_kinds) if scope_kinds else _default_scope_kinds(error_class, include_dimms)
    n_filters = math.prod(len(d) for d in CLASS_FILTERS[error_class].values())
    return n_filters * len(CLASS_GRANULARITIES[error_class]) * len(topology.scopes(kinds))


class SuiteData:
    """
    Per error class view of a dataset shared by all the specs of a suite.

    Event frames, windows and neutron window means are computed once; the
    event rows of each scope are cached on first use.
    """

    def __init__(
        self,
        dataset: Dataset,
        error_class: ErrorClass,
        neutron: NeutronSeries | None = None,
        interval: ObservationInterval | None = None,
        exclude_partial: bool = False,
        drop_zero_windows: bool = False,
    ):
        self.dataset = dataset
        self.error_class = error_class
        self.neutron = neutron if neutron is not None else dataset.neutron
        if self.neutron is None:
            self.neutron = NeutronSeries()
        self.interval = interval or dataset.observation_interval()
        self.drop_zero_windows = drop_zero_windows
        events = {
            ErrorClass.CE: dataset.ce_events,
            ErrorClass.UE: dataset.ue_events,
            ErrorClass.MB: dataset.scrub_events,
        }[error_class]
        self.frame = event_frame(events, dataset.topology)
        self.windows = {
            g: make_windows(self.interval, g, exclude_partial)
            for g in CLASS_GRANULARITIES[error_class]
        }
        self.neutron_means = {
            g: window_neutron_means(self.neutron, w)[0] for g, w in self.windows.items()
        }
        self._scope_frames: dict[Scope, pd.DataFrame] = {}
        self._scope_categories: dict[Scope, set[tuple[str, str]]] = {}

    def scope_frame(self, scope: Scope) -> pd.DataFrame:
        if scope not in self._scope_frames:
            if scope.kind == ScopeKind.SYSTEM:
                sub = self.frame
            else:
                sub = self.frame[self.frame[scope.kind.value] == scope.id]
            self._scope_frames[scope] = sub
        return self._scope_frames[scope]

    def has_dimms(self, spec: TestSpec) -> bool:
        """Whether the spec scope contains a DIMM of the spec manufacturer and technology."""
        if spec.manufacturer is None and spec.technology is None:
            return True
        if spec.scope not in self._scope_categories:
            self._scope_categories[spec.scope] = {
                (d.manufacturer.value, d.technology.token)
                for d in self.dataset.topology.dimms_in(spec.scope)
            }
        return any(
            spec.manufacturer in (ALL, manufacturer)
            and spec.technology in (ALL, technology)
            for manufacturer, technology in self._scope_categories[spec.scope]
        )

    def counts(self, spec: TestSpec) -> CountSeries:
        windows = self.windows[spec.window]
        counts = aggregate(
            self.scope_frame(spec.scope),
            windows,
            filters=spec.filters(),
            metric=spec.metric or Metric.EVENT_COUNT,
        )
        if self.error_class == ErrorClass.MB:
            counts, _ = normalize_by_exposure(
                counts, self.dataset.exposure, nodes=self._exposure_nodes(spec.scope)
            )
        return counts

    def _exposure_nodes(self, scope: Scope) -> set[str] | None:
        if scope.kind == ScopeKind.SYSTEM:
            return None
        return {d.node for d in self.dataset.topology.dimms_in(scope)} or {scope.id}

    def paired(self, spec: TestSpec) -> PairedSeries:
        counts = self.counts(spec)
        all_windows = self.windows[spec.window]
        means = self.neutron_means[spec.window]
        if len(counts.windows) != len(all_windows):
            position = {w: i for i, w in enumerate(all_windows)}
            means = means[[position[w] for w in counts.windows]]
        keep = ~np.isnan(means)
        paired = PairedSeries(
            windows=[w for w, k in zip(counts.windows, keep) if k],
            neutron=means[keep],
            errors=counts.values[keep],
        )
        if self.drop_zero_windows:
            paired = paired.drop_zero_errors()
        return paired


def feasibility_filter(
    specs: Sequence[TestSpec],
    dataset: Dataset,
    neutron: NeutronSeries | None = None,
    interval: ObservationInterval | None = None,
    exclude_partial: bool = False,
    drop_zero_windows: bool = False,
) -> FeasibilityReport:
    """
    Reject the specs that cannot be tested.

    A spec is rejected with ``absent_combination`` when its scope holds no
    DIMM of the requested manufacturer and technology, and with
    ``untestable_constant`` when its aligned error series is constant,
    all-zero series included.
    """
    report = FeasibilityReport()
    data: dict[ErrorClass, SuiteData] = {}
    for spec in specs:
        if spec.error_class not in data:
            data[spec.error_class] = SuiteData(
                dataset, spec.error_class, neutron, interval, exclude_partial, drop_zero_windows
            )
        suite_data = data[spec.error_class]
        if not suite_data.has_dimms(spec):
            report.rejected.append(RejectedSpec(spec, TestStatus.ABSENT_COMBINATION))
            continue
        errors = suite_data.paired(spec).errors
        if len(errors) == 0 or np.all(errors == errors[0]):
            report.rejected.append(RejectedSpec(spec, TestStatus.UNTESTABLE_CONSTANT))
            continue
        report.feasible.append(spec)
    logger.info("feasibility: %s", report.tally)
    return report


def _suite_data(
    specs: Sequence[TestSpec],
    dataset: Dataset,
    neutron: NeutronSeries | None,
    interval: ObservationInterval | None,
    exclude_partial: bool,
    drop_zero_windows: bool,
) -> dict[ErrorClass, SuiteData]:
    return {
        error_class: SuiteData(
            dataset, error_class, neutron, interval, exclude_partial, drop_zero_windows
        )
        for error_class in sorted({s.error_class for s in specs}, key=list(ErrorClass).index)
    }


def _kendall_outcome(data: SuiteData, spec: TestSpec) -> list[TestOutcome]:
    paired = data.paired(spec)
    result = kendall_tau_b(paired.neutron, paired.errors)
    return [TestOutcome(spec=spec, kind=TestKind.KENDALL, result=result)]


def _ks_outcomes(
    data: SuiteData, spec: TestSpec, percentiles: Sequence[float]
) -> list[TestOutcome]:
    paired = data.paired(spec)
    outcomes = []
    for q in percentiles:
        if len(paired) == 0:
            result = KsResult(TestStatus.TOO_FEW_POINTS)
        else:
            high, rest = partition_by_threshold(paired, percentile(paired.neutron, q))
            if len(high) == 0 or len(rest) == 0:
                result = KsResult(TestStatus.TOO_FEW_POINTS, n_high=len(high), n_rest=len(rest))
            else:
                result = ks_two_sample(high, rest)
        outcomes.append(
            TestOutcome(spec=spec, kind=TestKind.KS, result=result, percentile=float(q))
        )
    return outcomes


def apply_by_correction(outcomes: Sequence[TestOutcome]) -> list[TestOutcome]:
    """Adjust jointly the p-values of the ok outcomes and sort the outcomes."""
    ordered = sorted(outcomes, key=lambda o: o.sort_key)
    ok = [i for i, o in enumerate(ordered) if o.status == TestStatus.OK]
    adjusted = by_adjust([ordered[i].result.p_raw for i in ok]).p_adj
    for i, p_adj in zip(ok, adjusted):
        if p_adj < ordered[i].result.p_raw:
            raise InvariantViolationError("adjusted p-value below its raw p-value")
        ordered[i] = dataclasses.replace(ordered[i], p_adj=p_adj)
    return ordered


def _run_suite(worker, specs, data, n_jobs) -> list[TestOutcome]:
    logger.info("running %d specs on %d threads", len(specs), n_jobs)
    per_spec = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(worker)(data[spec.error_class], spec) for spec in specs
    )
    return apply_by_correction([o for outcomes in per_spec for o in outcomes])


def run_kendall_suite(
    specs: Sequence[TestSpec],
    dataset: Dataset,
    neutron: NeutronSeries | None = None,
    interval: ObservationInterval | None = None,
    exclude_partial: bool = False,
    drop_zero_windows: bool = False,
    n_jobs: int = 1,
) -> list[TestOutcome]:
    """
    Kendall tau-b between the neutron window means and the error series of each spec.

    The Benjamini-Yekutieli correction is applied once over all the ok
    outcomes of the suite. Outcomes are sorted by spec, whatever ``n_jobs``.

    Parameters
    ----------
    specs
        Specs to run, usually the feasible ones.
    dataset
        Events, topology and exposure.
    neutron
        Neutron series, the dataset one by default.
    interval
        Observation interval, the dataset one by default.
    exclude_partial
        Drop the windows clipped by the observation interval.
    drop_zero_windows
        Drop the windows without error before testing.
    n_jobs
        Number of worker threads.
    """
    data = _suite_data(specs, dataset, neutron, interval, exclude_partial, drop_zero_windows)
    return _run_suite(_kendall_outcome, specs, data, n_jobs)


def run_ks_suite(
    specs: Sequence[TestSpec],
    dataset: Dataset,
    neutron: NeutronSeries | None = None,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    interval: ObservationInterval | None = None,
    exclude_partial: bool = False,
    drop_zero_windows: bool = False,
    n_jobs: int = 1,
) -> list[TestOutcome]:
    """
    Two-sample KS tests between high-neutron windows and the other windows.

    For each spec and percentile, the windows whose neutron mean exceeds the
    percentile of the window means form the high sample. The correction is
    applied jointly over the whole suite.
    """
    data = _suite_data(specs, dataset, neutron, interval, exclude_partial, drop_zero_windows)

    def worker(suite_data, spec):
        return _ks_outcomes(suite_data, spec, percentiles)

    return _run_suite(worker, specs, data, n_jobs)


def summarize(outcomes: Sequence[TestOutcome], alpha: float = DEFAULT_ALPHA) -> SuiteSummary:
    """
    Figures of a suite: sorted coefficients, p-value histograms and significant findings.

    Histograms have 20 bins over [0, 1].
    """
    ok = [o for o in outcomes if o.status == TestStatus.OK]
    bins = np.linspace(0.0, 1.0, 21)
    raw = np.histogram([o.result.p_raw for o in ok], bins=bins)[0]
    adjusted = np.histogram([o.p_adj for o in ok if o.p_adj is not None], bins=bins)[0]
    significant = []
    concentration: Counter[str] = Counter()
    directions: Counter[str] = Counter()
    for outcome in sorted(ok, key=lambda o: o.sort_key):
        if outcome.p_adj is None or outcome.p_adj >= alpha:
            continue
        band = "moderate/high" if abs(outcome.stat) >= STRONG_CORRELATION else "low"
        significant.append(SignificantOutcome(outcome, band))
        concentration[str(outcome.spec.scope)] += 1
        if outcome.direction is not None:
            directions[f"{outcome.direction:+d}" if outcome.direction else "0"] += 1
    return SuiteSummary(
        coefficients=sorted(float(o.stat) for o in ok),
        raw_histogram=[int(c) for c in raw],
        adjusted_histogram=[int(c) for c in adjusted],
        status_tally=dict(sorted(Counter(o.status.value for o in outcomes).items())),
        significant=significant,
        concentration=dict(sorted(concentration.items(), key=lambda kv: (-kv[1], kv[0]))),
        direction_tally=dict(sorted(directions.items())),
        alpha=alpha,
    )


def _format(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def outcomes_to_table(outcomes: Sequence[TestOutcome]) -> str:
    """
    Suite outcomes as CSV, one row per outcome.

    Columns: error_class, the eight category filters (empty when they do not
    apply), window, scope_kind, scope_id, kind, percentile, n, stat, p_raw,
    p_adj, status.
    """
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=TABLE_HEADER, lineterminator="\n")
    writer.writeheader()
    for outcome in outcomes:
        row = outcome.spec.row()
        row.update(
            kind=outcome.kind.value,
            percentile=_format(outcome.percentile),
            n=str(outcome.result.n),
            stat=_format(outcome.stat),
            p_raw=_format(outcome.result.p_raw),
            p_adj=_format(outcome.p_adj),
            status=outcome.status.value,
        )
        writer.writerow(row)
    return buffer.getvalue()
