from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pandas as pd
from monty.serialization import loadfn

from cosmicdram.core.base import CDObject
from cosmicdram.core.data_objects import (
    Dataset,
    Finding,
    JobRecord,
    NeutronSeries,
    ObservationInterval,
    ScopeKind,
)
from cosmicdram.core.exceptions import ParsingError
from cosmicdram.io import DATASET_FILES, DATASET_METADATA, log_mapping, validate_dataset
from cosmicdram.io.neutron import NeutronLogIO
from cosmicdram.ml.evaluation import (
    EvaluationReport,
    MitigationParams,
    mitigation_from_jobs,
    run_prediction,
)
from cosmicdram.ml.features import Target
from cosmicdram.ml.forest import ForestModel
from cosmicdram.monitors import MonitorComparison, compare_monitors
from cosmicdram.stats import UniformityResult, chi_square_uniformity
from cosmicdram.testbench import (
    DEFAULT_PERCENTILES,
    ErrorClass,
    FeasibilityReport,
    TestOutcome,
    enumerate_specs,
    feasibility_filter,
    run_kendall_suite,
    run_ks_suite,
)
from cosmicdram.timegrid import (
    Granularity,
    Heatmap,
    aggregate,
    align,
    event_frame,
    exclude_top_dimms,
    heatmap_bins,
    hour_of_day_profile,
    make_windows,
    monthly_trend,
    neutron_hour_of_day_profile,
    window_neutron_means,
)
from cosmicdram.utils import file_digest, parse_timestamp

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class HourlyProfiles(CDObject):
    utc_offset: float
    fraction: float
    errors_before: np.ndarray
    errors_after: np.ndarray
    neutron: np.ndarray
    excluded: list[str] = field(default_factory=list)
    uniformity_before: UniformityResult | None = None
    uniformity_after: UniformityResult | None = None


class StudyManager(CDObject):
    """Entry point of the studies on a dataset directory.

    Attributes
    ----------
    dataset_dir : Path
        Directory holding the input files (``neutron.csv``, ``ce.csv``,
        ``ue.csv``, ``scrub.csv``, ``exposure.csv``, ``inventory.csv``,
        optionally ``jobs.csv`` and ``dataset.json``). Missing files are
        empty inputs.
    start, end : datetime
        Override of the observation interval bounds.
    """

    def __init__(
        self,
        dataset_dir: str | Path,
        start: datetime | str | None = None,
        end: datetime | str | None = None,
    ):
        self.dataset_dir = Path(dataset_dir)
        self.start = parse_timestamp(start) if isinstance(start, str) else start
        self.end = parse_timestamp(end) if isinstance(end, str) else end
        self._dataset: Dataset | None = None
        self._jobs: list[JobRecord] | None = None

    def path(self, family: str) -> Path:
        return self.dataset_dir / DATASET_FILES[family]

    def metadata(self) -> dict:
        path = self.dataset_dir / DATASET_METADATA
        return loadfn(path) if path.exists() else {}

    def _parse(self, family: str, io_obj=None):
        path = self.path(family)
        io_obj = io_obj or log_mapping[family]()
        if not path.exists():
            logger.info("%s not found, using an empty input", path.name)
            return io_obj.parse(",".join(io_obj.header) + "\n")
        try:
            return io_obj.parse(path)
        except ParsingError as e:
            raise type(e)(e.lineno, f"{path.name}: {e.reason}") from e

    def load(self) -> Dataset:
        """Parse the dataset directory (once) and apply the interval override."""
        if self._dataset is not None:
            return self._dataset
        metadata = self.metadata()
        neutron_io = NeutronLogIO(
            monitor_id=metadata.get("monitor_id", ""),
            corrected=metadata.get("corrected", True),
        )
        neutron = self._parse("neutron", neutron_io)
        dataset = Dataset(
            topology=self._parse("inventory"),
            ce_events=self._parse("ce"),
            ue_events=self._parse("ue"),
            scrub_events=self._parse("scrub"),
            exposure=self._parse("exposure"),
            neutron=neutron,
        )
        start = self.start or _metadata_time(metadata, "start")
        end = self.end or _metadata_time(metadata, "end")
        if start is not None or end is not None:
            derived = None if start and end else dataset.observation_interval()
            dataset.interval = ObservationInterval(start or derived.start, end or derived.end)
        self._dataset = dataset
        return dataset

    def jobs(self) -> list[JobRecord]:
        if self._jobs is None:
            self._jobs = self._parse("jobs") if self.path("jobs").exists() else []
        return self._jobs

    def input_digests(self) -> dict[str, str]:
        """SHA-256 digests of the input files present in the dataset directory."""
        names = sorted(set(DATASET_FILES.values()) | {DATASET_METADATA})
        return {
            name: file_digest(self.dataset_dir / name)
            for name in names
            if (self.dataset_dir / name).exists()
        }

    def validate(self) -> list[Finding]:
        dataset = self.load()
        events = [*dataset.ce_events, *dataset.ue_events, *dataset.scrub_events]
        return validate_dataset(dataset.topology, events, dataset.interval, dataset.exposure)

    def timeline(
        self, granularity: Granularity | str = Granularity.DAY, exclude_partial: bool = False
    ) -> pd.DataFrame:
        """
        Neutron means and error counts per window, with their monthly means.

        Windows without neutron sample have a NaN neutron mean.
        """
        dataset = self.load()
        windows = make_windows(dataset.observation_interval(), granularity, exclude_partial)
        means, n_samples = window_neutron_means(dataset.neutron or NeutronSeries(), windows)
        table = pd.DataFrame(
            {
                "window_start": [w.start for w in windows],
                "window_end": [w.end for w in windows],
                "clipped": [w.clipped for w in windows],
                "neutron_mean": means,
                "neutron_samples": n_samples,
            }
        )
        for name, events in (
            ("ce", dataset.ce_events),
            ("ue", dataset.ue_events),
            ("scrub", dataset.scrub_events),
        ):
            table[f"{name}_count"] = aggregate(events, windows, topology=dataset.topology).values
        for column in ("neutron_mean", "ce_count", "ue_count", "scrub_count"):
            table[column.replace("_mean", "").replace("_count", "") + "_monthly"] = monthly_trend(
                windows, table[column].to_numpy()
            )
        return table

    def specs(
        self,
        error_class: ErrorClass | str,
        scope_kinds: list[ScopeKind] | None = None,
        windows: list[Granularity] | None = None,
        include_dimms: bool = False,
    ):
        specs = enumerate_specs(error_class, self.load().topology, include_dimms, scope_kinds)
        if windows:
            specs = [s for s in specs if s.window in set(windows)]
        return specs

    def correlate(
        self,
        error_class: ErrorClass | str,
        scope_kinds: list[ScopeKind] | None = None,
        windows: list[Granularity] | None = None,
        include_dimms: bool = False,
        drop_zero_windows: bool = False,
        exclude_partial: bool = False,
        n_jobs: int = 1,
    ) -> tuple[FeasibilityReport, list[TestOutcome]]:
        """Enumerate, filter and run the Kendall suite of an error class."""
        dataset = self.load()
        specs = self.specs(error_class, scope_kinds, windows, include_dimms)
        options = dict(exclude_partial=exclude_partial, drop_zero_windows=drop_zero_windows)
        report = feasibility_filter(specs, dataset, **options)
        outcomes = run_kendall_suite(report.feasible, dataset, n_jobs=n_jobs, **options)
        return report, outcomes

    def ks(
        self,
        error_class: ErrorClass | str,
        percentiles=DEFAULT_PERCENTILES,
        scope_kinds: list[ScopeKind] | None = None,
        windows: list[Granularity] | None = None,
        include_dimms: bool = False,
        drop_zero_windows: bool = False,
        exclude_partial: bool = False,
        n_jobs: int = 1,
    ) -> tuple[FeasibilityReport, list[TestOutcome]]:
        """Enumerate, filter and run the KS suite of an error class."""
        dataset = self.load()
        specs = self.specs(error_class, scope_kinds, windows, include_dimms)
        options = dict(exclude_partial=exclude_partial, drop_zero_windows=drop_zero_windows)
        report = feasibility_filter(specs, dataset, **options)
        outcomes = run_ks_suite(
            report.feasible, dataset, percentiles=percentiles, n_jobs=n_jobs, **options
        )
        return report, outcomes

    def _events(self, error_class: ErrorClass | str) -> list:
        dataset = self.load()
        return {
            ErrorClass.CE: dataset.ce_events,
            ErrorClass.UE: dataset.ue_events,
            ErrorClass.MB: dataset.scrub_events,
        }[ErrorClass(error_class)]

    def hourly(
        self,
        error_class: ErrorClass | str = ErrorClass.CE,
        utc_offset: float = 0.0,
        exclude_top: float = 0.0,
    ) -> HourlyProfiles:
        """Hour-of-day profiles of the errors, before and after removing the top DIMMs."""
        events = self._events(error_class)
        kept, excluded = exclude_top_dimms(events, exclude_top)
        before = hour_of_day_profile(event_frame(events), utc_offset)
        after = hour_of_day_profile(event_frame(kept), utc_offset)
        return HourlyProfiles(
            utc_offset=utc_offset,
            fraction=exclude_top,
            errors_before=before,
            errors_after=after,
            neutron=neutron_hour_of_day_profile(self.load().neutron or NeutronSeries(), utc_offset),
            excluded=excluded,
            uniformity_before=chi_square_uniformity(before),
            uniformity_after=chi_square_uniformity(after),
        )

    def heatmap(
        self,
        error_class: ErrorClass | str = ErrorClass.CE,
        granularity: Granularity | str = Granularity.HOUR,
        x_bins: int = 20,
        y_bins: int = 20,
        y_log: bool = False,
        exclude_partial: bool = False,
    ) -> Heatmap:
        """Windows binned by (neutron mean, system-wide error count)."""
        dataset = self.load()
        windows = make_windows(dataset.observation_interval(), granularity, exclude_partial)
        counts = aggregate(self._events(error_class), windows, topology=dataset.topology)
        paired = align(dataset.neutron or NeutronSeries(), counts)
        return heatmap_bins(paired, x_bins, y_bins, y_log)

    def predict(
        self,
        target: Target | str = Target.UE_NEXT_DAY,
        tick: timedelta = timedelta(minutes=1),
        seed: int = 0,
        grid: dict | None = None,
        permute_neutron: bool = False,
        mitigation: MitigationParams | None = None,
        n_jobs: int = 1,
    ) -> tuple[EvaluationReport, ForestModel]:
        """
        Train and evaluate the error prediction model.

        Without explicit mitigation parameters, a true positive is valued at
        the mean node-hours of the jobs of ``jobs.csv`` when present.
        """
        if mitigation is None and self.jobs():
            mitigation = mitigation_from_jobs(self.jobs())
        return run_prediction(
            self.load(),
            target=target,
            tick=tick,
            seed=seed,
            grid=grid,
            permute_neutron=permute_neutron,
            mitigation=mitigation,
            n_jobs=n_jobs,
        )

    def monitors(
        self,
        other: str | Path,
        granularity: Granularity | str = Granularity.DAY,
        other_id: str = "",
    ) -> MonitorComparison:
        """Compare the dataset neutron series with the series of another monitor file."""
        other_series = NeutronLogIO(monitor_id=other_id or Path(other).stem).parse(Path(other))
        return compare_monitors(self.load().neutron or NeutronSeries(), other_series, granularity)


def _metadata_time(metadata: dict, key: str) -> datetime | None:
    value = metadata.get(key)
    if value is None:
        return None
    return parse_timestamp(value) if isinstance(value, str) else value
