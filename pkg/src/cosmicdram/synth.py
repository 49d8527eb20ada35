"""Seeded synthetic datasets.

Every random stream is derived from the configuration seed and a stream name
(and the DIMM or node id), so the output does not depend on the generation
order and a configuration always produces the same files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from monty.serialization import dumpfn, loadfn

from cosmicdram.core.base import CDEnum, CDObject
from cosmicdram.core.data_objects import (
    CorrectedErrorEvent,
    Dataset,
    Detection,
    DimmRecord,
    JobRecord,
    Manufacturer,
    NeutronSample,
    NeutronSeries,
    ObservationInterval,
    ScanExposureRecord,
    ScrubberErrorEvent,
    Technology,
    Topology,
    UeCause,
    UncorrectedErrorEvent,
)
from cosmicdram.core.exceptions import ConfigurationError
from cosmicdram.io import DATASET_FILES, DATASET_METADATA, log_mapping
from cosmicdram.utils import format_timestamp, from_epoch, parse_timestamp, stable_seed, to_epoch, to_utc

logger = logging.getLogger(__name__)

HOUR = 3600


class FaultKind(CDEnum):
    NULL = "null"
    LINEAR_COUPLED = "linear_coupled"
    THRESHOLD_COUPLED = "threshold_coupled"
    HOT_DIMM = "hot_dimm"


def _check_non_negative(obj, *names):
    for name in names:
        if getattr(obj, name) < 0:
            raise ConfigurationError(f"{name} must be >= 0, got {getattr(obj, name)}")


@dataclass
class TopologyShape(CDObject):
    racks: int = 1
    nodes_per_rack: int = 2
    sockets_per_node: int = 2
    dimms_per_socket: int = 2
    capacity_mb: int = 16384

    def __post_init__(self):
        for name in ("racks", "nodes_per_rack", "sockets_per_node", "dimms_per_socket", "capacity_mb"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")


@dataclass
class NeutronModel(CDObject):
    base_rate: float = 71.0
    """Counts per second at the start of the interval."""

    trend_per_day: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self):
        _check_non_negative(self, "base_rate", "noise_std")


@dataclass
class FaultModel(CDObject):
    """
    Error intensity model.

    ``null``: ``rate`` events per DIMM-hour. ``linear_coupled``: the rate is
    scaled by ``1 + slope * (neutron - mean neutron)``, clamped at 0.
    ``threshold_coupled``: the rate is multiplied by ``multiplier`` in the
    hours whose neutron rate exceeds the ``percentile`` of the series.
    ``hot_dimm``: on top of the null background, ``hot_dimms`` DIMMs emit
    ``repeat_rate`` events per hour on ``hot_cells`` fixed cells of one row.
    """

    kind: FaultKind = FaultKind.NULL
    rate: float = 1e-3
    slope: float = 0.0
    percentile: float = 99.0
    multiplier: float = 1.0
    hot_dimms: int = 0
    hot_cells: int = 2
    repeat_rate: float = 0.0
    burst_hour: int | None = None
    """Hour of the day (UTC) concentrating all the hot DIMM repeats."""

    diurnal_amplitude: float = 0.0
    """Relative amplitude of a daily sinusoid modulating every intensity."""

    diurnal_peak_hour: float = 14.0
    ue_rate: float = 0.0
    """Uncorrected errors (warnings included) per DIMM-hour."""

    scrub_rate: float = 0.0
    """Scrubber errors per node-hour."""

    mb_per_hour: float = 0.0
    """Memory scanned per node-hour by the scrubber."""

    def __post_init__(self):
        self.kind = FaultKind(self.kind)
        _check_non_negative(
            self, "rate", "hot_dimms", "repeat_rate", "ue_rate", "scrub_rate", "mb_per_hour"
        )
        if self.multiplier < 1:
            raise ConfigurationError(f"multiplier must be >= 1, got {self.multiplier}")
        if not 0 < self.percentile < 100:
            raise ConfigurationError(f"percentile must be in (0, 100), got {self.percentile}")
        if not 0 <= self.diurnal_amplitude <= 1:
            raise ConfigurationError("diurnal_amplitude must be in [0, 1]")
        if self.hot_cells < 1:
            raise ConfigurationError("hot_cells must be >= 1")
        if self.burst_hour is not None and not 0 <= self.burst_hour < 24:
            raise ConfigurationError("burst_hour must be in [0, 24)")


@dataclass
class SynthConfig(CDObject):
    seed: int = 0
    start: datetime = datetime(2015, 1, 1, tzinfo=timezone.utc)
    end: datetime = datetime(2015, 3, 1, tzinfo=timezone.utc)
    topology: TopologyShape = field(default_factory=TopologyShape)
    neutron: NeutronModel = field(default_factory=NeutronModel)
    fault: FaultModel = field(default_factory=FaultModel)
    mean_job_hours: float = 6.0
    monitor_id: str = "synthetic"

    def __post_init__(self):
        self.start = parse_timestamp(self.start) if isinstance(self.start, str) else to_utc(self.start)
        self.end = parse_timestamp(self.end) if isinstance(self.end, str) else to_utc(self.end)
        if isinstance(self.topology, dict):
            self.topology = TopologyShape(**self.topology)
        if isinstance(self.neutron, dict):
            self.neutron = NeutronModel(**self.neutron)
        if isinstance(self.fault, dict):
            self.fault = FaultModel(**self.fault)
        if self.end <= self.start:
            raise ConfigurationError("the synthetic interval must not be empty")
        if self.mean_job_hours <= 0:
            raise ConfigurationError("mean_job_hours must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> SynthConfig:
        """Load a configuration from a YAML or JSON file."""
        content = loadfn(path)
        if isinstance(content, cls):
            return content
        if not isinstance(content, dict):
            raise ConfigurationError(f"{path} does not hold a synthetic configuration")
        try:
            return cls(**content)
        except TypeError as e:
            raise ConfigurationError(str(e)) from e

    @property
    def interval(self) -> ObservationInterval:
        return ObservationInterval(self.start, self.end)

    def hour_starts(self) -> np.ndarray:
        """Epoch seconds of the start of every hour of the interval."""
        return np.arange(to_epoch(self.start), to_epoch(self.end), HOUR, dtype=np.int64)


@dataclass
class SynthLogs(CDObject):
    ce_events: list[CorrectedErrorEvent] = field(default_factory=list)
    ue_events: list[UncorrectedErrorEvent] = field(default_factory=list)
    scrub_events: list[ScrubberErrorEvent] = field(default_factory=list)
    exposure: list[ScanExposureRecord] = field(default_factory=list)


def _rng(config: SynthConfig, *stream: str | int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(stable_seed(config.seed, *stream)))


def gen_topology(config: SynthConfig) -> Topology:
    """
    Inventory of the configured shape.

    Each node is populated with DIMMs of a single manufacturer and technology,
    drawn from the seed.
    """
    shape = config.topology
    rng = _rng(config, "topology")
    manufacturers = [Manufacturer.A, Manufacturer.B, Manufacturer.C]
    technologies = [Technology.T3X, Technology.T2Y, Technology.T2Z]
    topology = Topology()
    n_nodes = shape.racks * shape.nodes_per_rack
    node_manufacturers = rng.integers(0, 3, size=n_nodes)
    node_technologies = rng.integers(0, 3, size=n_nodes)
    for index in range(n_nodes):
        rack = f"r{index // shape.nodes_per_rack:02d}"
        node = f"n{index:04d}"
        for s in range(shape.sockets_per_node):
            socket = f"{node}-s{s}"
            for d in range(shape.dimms_per_socket):
                topology.add_dimm(
                    DimmRecord(
                        dimm=f"{socket}-d{d}",
                        node=node,
                        socket=socket,
                        rack=rack,
                        manufacturer=manufacturers[node_manufacturers[index]],
                        technology=technologies[node_technologies[index]],
                        capacity_mb=shape.capacity_mb,
                    )
                )
    return topology


def gen_neutron(config: SynthConfig) -> NeutronSeries:
    """
    Hourly neutron samples: base rate, linear trend and Gaussian noise.

    The rate is clamped at 0 and has no daily cycle.
    """
    model = config.neutron
    hours = config.hour_starts()
    days = (hours - hours[0]) / 86400.0
    noise = _rng(config, "neutron").normal(0.0, 1.0, size=len(hours))
    rates = np.clip(model.base_rate + model.trend_per_day * days + model.noise_std * noise, 0.0, None)
    samples = [
        NeutronSample(timestamp=from_epoch(t), rate=float(r)) for t, r in zip(hours, rates)
    ]
    return NeutronSeries(samples=samples, monitor_id=config.monitor_id)


def hourly_modulation(config: SynthConfig, neutron: NeutronSeries) -> np.ndarray:
    """
    Multiplicative factor of the error intensities for every hour of the interval.

    Hours without neutron sample use the mean rate.
    """
    fault = config.fault
    hours = config.hour_starts()
    epochs, rates = neutron.epochs, neutron.rates
    mean_rate = rates.mean() if len(rates) else 0.0
    hourly = np.full(len(hours), mean_rate)
    if len(epochs):
        position = np.minimum(np.searchsorted(epochs, hours), len(epochs) - 1)
        found = epochs[position] == hours
        hourly[found] = rates[position[found]]
    factor = np.ones(len(hours))
    if fault.kind == FaultKind.LINEAR_COUPLED:
        factor = np.clip(1.0 + fault.slope * (hourly - mean_rate), 0.0, None)
    elif fault.kind == FaultKind.THRESHOLD_COUPLED and len(rates):
        threshold = np.percentile(rates, fault.percentile)
        factor = np.where(hourly > threshold, fault.multiplier, 1.0)
    if fault.diurnal_amplitude:
        hour_of_day = (hours // HOUR) % 24
        factor = factor * (
            1.0 + fault.diurnal_amplitude * np.cos(2 * np.pi * (hour_of_day - fault.diurnal_peak_hour) / 24)
        )
    return factor


def _event_times(rng: np.random.Generator, hours: np.ndarray, intensity: np.ndarray) -> np.ndarray:
    """Poisson counts per hour, with times uniform within their hour."""
    counts = rng.poisson(intensity)
    starts = np.repeat(hours, counts)
    return np.sort(starts + rng.integers(0, HOUR, size=len(starts)))


def _hot_dimms(config: SynthConfig, topology: Topology) -> list[str]:
    fault = config.fault
    if fault.kind != FaultKind.HOT_DIMM or fault.hot_dimms == 0:
        return []
    ids = topology.dimm_ids
    chosen = _rng(config, "hot").choice(len(ids), size=min(fault.hot_dimms, len(ids)), replace=False)
    return sorted(ids[i] for i in chosen)


def _hot_events(config: SynthConfig, record: DimmRecord, hours: np.ndarray) -> list[CorrectedErrorEvent]:
    fault = config.fault
    rng = _rng(config, "hot", record.dimm)
    rank, bank, row = int(rng.integers(0, 2)), int(rng.integers(0, 16)), int(rng.integers(0, 65536))
    columns = rng.choice(1024, size=fault.hot_cells, replace=False)
    intensity = np.full(len(hours), fault.repeat_rate)
    if fault.burst_hour is not None:
        in_burst = (hours // HOUR) % 24 == fault.burst_hour
        intensity = np.where(in_burst, fault.repeat_rate * 24, 0.0)
    times = _event_times(rng, hours, intensity)
    cells = rng.integers(0, fault.hot_cells, size=len(times))
    return [
        CorrectedErrorEvent(
            timestamp=from_epoch(t),
            node=record.node,
            dimm=record.dimm,
            rank=rank,
            bank=bank,
            row=row,
            column=int(columns[c]),
            detection=Detection.MEMORY_READ,
        )
        for t, c in zip(times, cells)
    ]


def gen_errors(
    config: SynthConfig, neutron: NeutronSeries, topology: Topology | None = None
) -> SynthLogs:
    """
    Error logs and scrubber exposure under the configured fault model.

    Events are drawn as Poisson counts per DIMM (node for the scrubber) and
    hour, with uniform times within the hour.
    """
    topology = topology or gen_topology(config)
    fault = config.fault
    hours = config.hour_starts()
    factor = hourly_modulation(config, neutron)
    hot = set(_hot_dimms(config, topology))
    logs = SynthLogs()
    for record in sorted(topology.dimms, key=lambda d: d.dimm):
        if record.dimm in hot:
            logs.ce_events += _hot_events(config, record, hours)
        else:
            rng = _rng(config, "ce", record.dimm)
            times = _event_times(rng, hours, fault.rate * factor)
            for t in times:
                logs.ce_events.append(
                    CorrectedErrorEvent(
                        timestamp=from_epoch(t),
                        node=record.node,
                        dimm=record.dimm,
                        rank=int(rng.integers(0, 2)),
                        bank=int(rng.integers(0, 16)),
                        row=int(rng.integers(0, 65536)),
                        column=int(rng.integers(0, 1024)),
                        detection=Detection.MEMORY_READ if rng.random() < 0.5 else Detection.PATROL_SCRUB,
                    )
                )
        if fault.ue_rate:
            rng = _rng(config, "ue", record.dimm)
            causes = list(UeCause)
            for t in _event_times(rng, hours, fault.ue_rate * factor):
                logs.ue_events.append(
                    UncorrectedErrorEvent(
                        timestamp=from_epoch(t),
                        node=record.node,
                        dimm=record.dimm,
                        cause=causes[int(rng.integers(0, len(causes)))],
                    )
                )
    capacity = {node: 0 for node in topology.nodes}
    for record in topology.dimms:
        capacity[record.node] += record.capacity_mb
    for node in topology.nodes:
        if fault.scrub_rate:
            rng = _rng(config, "scrub", node)
            for t in _event_times(rng, hours, fault.scrub_rate * factor):
                logs.scrub_events.append(
                    ScrubberErrorEvent(
                        timestamp=from_epoch(t),
                        node=node,
                        address=int(rng.integers(0, capacity[node] * 1024 * 1024)),
                        bits_flipped=1 + int(rng.poisson(0.3)),
                    )
                )
        if fault.mb_per_hour:
            logs.exposure += [
                ScanExposureRecord(
                    interval_start=from_epoch(t),
                    interval_end=from_epoch(t + HOUR),
                    node=node,
                    mb_scanned=fault.mb_per_hour,
                )
                for t in hours
            ]
    logs.ce_events.sort(key=lambda e: (e.timestamp, e.node, e.dimm))
    logs.ue_events.sort(key=lambda e: (e.timestamp, e.node, e.dimm))
    logs.scrub_events.sort(key=lambda e: (e.timestamp, e.node))
    logs.exposure.sort(key=lambda r: (r.interval_start, r.node))
    logger.info(
        "generated %d CEs, %d UEs, %d scrubber errors",
        len(logs.ce_events),
        len(logs.ue_events),
        len(logs.scrub_events),
    )
    return logs


def gen_jobs(config: SynthConfig, topology: Topology | None = None) -> list[JobRecord]:
    """Back-to-back jobs on every node, with exponential durations."""
    topology = topology or gen_topology(config)
    start, end = to_epoch(config.start), to_epoch(config.end)
    jobs = []
    for node in topology.nodes:
        rng = _rng(config, "jobs", node)
        t = start
        while t < end:
            duration = max(60, int(rng.exponential(config.mean_job_hours * HOUR)))
            job_end = min(t + duration, end)
            jobs.append(JobRecord(node=node, start=from_epoch(t), end=from_epoch(job_end)))
            t = job_end
    jobs.sort(key=lambda j: (j.start, j.node))
    return jobs


def generate(config: SynthConfig) -> tuple[Dataset, list[JobRecord]]:
    """A complete synthetic dataset and its job log."""
    topology = gen_topology(config)
    neutron = gen_neutron(config)
    logs = gen_errors(config, neutron, topology)
    dataset = Dataset(
        topology=topology,
        ce_events=logs.ce_events,
        ue_events=logs.ue_events,
        scrub_events=logs.scrub_events,
        exposure=logs.exposure,
        neutron=neutron,
        interval=config.interval,
    )
    return dataset, gen_jobs(config, topology)


def write_dataset(
    dataset: Dataset, out_dir: str | Path, jobs: list[JobRecord] | None = None
) -> dict[str, Path]:
    """
    Write a dataset directory in the input file schemas.

    Returns
    -------
    dict
        Path of every written file, by family.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    neutron = dataset.neutron if dataset.neutron is not None else NeutronSeries()
    contents = {
        "neutron": neutron,
        "ce": dataset.ce_events,
        "ue": dataset.ue_events,
        "scrub": dataset.scrub_events,
        "exposure": dataset.exposure,
        "inventory": dataset.topology,
    }
    if jobs is not None:
        contents["jobs"] = jobs
    written = {}
    for family, objects in contents.items():
        path = out_dir / DATASET_FILES[family]
        path.write_text(log_mapping[family]().dump(objects))
        written[family] = path
    metadata = {
        "monitor_id": neutron.monitor_id,
        "corrected": neutron.corrected,
    }
    if dataset.interval is not None:
        metadata["start"] = format_timestamp(dataset.interval.start)
        metadata["end"] = format_timestamp(dataset.interval.end)
    dumpfn(metadata, out_dir / DATASET_METADATA, indent=2, sort_keys=True)
    written["metadata"] = out_dir / DATASET_METADATA
    return written
