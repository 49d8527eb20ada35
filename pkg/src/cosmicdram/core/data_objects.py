from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from cosmicdram.core.base import AliasedEnum, CDEnum, CDObject
from cosmicdram.core.exceptions import (
    DuplicateDimmError,
    InconsistentContainmentError,
)
from cosmicdram.utils import ceil_hour, epoch_array, floor_hour, to_utc


class Detection(AliasedEnum):
    """Path through which a corrected error was detected."""

    MEMORY_READ = "memory_read", "read"
    PATROL_SCRUB = "patrol_scrub", "scrub"
    UNKNOWN = "unknown"


class UeCause(CDEnum):
    UNCORRECTED_ECC = "uncorrected_ecc"
    SCRUB_FAILED = "scrub_failed"
    UE_WARNING = "ue_warning"


class Manufacturer(CDEnum):
    A = "A"
    B = "B"
    C = "C"
    UNKNOWN = "unknown"


class Technology(AliasedEnum):
    T3X = "T3x", "3x"
    T2Y = "T2y", "2y"
    T2Z = "T2z", "2z"
    UNKNOWN = "unknown"


class ScopeKind(CDEnum):
    """System granularity over which a test aggregates the errors.

    Members are declared from the coarsest to the finest scope, the order
    used when sorting scopes.
    """

    SYSTEM = "system"
    RACK = "rack"
    NODE = "node"
    SOCKET = "socket"
    DIMM = "dimm"

    @property
    def rank(self) -> int:
        return list(ScopeKind).index(self)


class TestStatus(CDEnum):
    """Outcome status of a statistical test.

    OK: the statistic and its p-value are available.
    UNTESTABLE_CONSTANT: one of the variables is constant, ranks are meaningless.
    TOO_FEW_POINTS: not enough observations for the test.
    ABSENT_COMBINATION: the scope contains no DIMM matching the category filters.
    """

    __test__ = False

    OK = "ok"
    UNTESTABLE_CONSTANT = "untestable_constant"
    TOO_FEW_POINTS = "too_few_points"
    ABSENT_COMBINATION = "absent_combination"


class Severity(CDEnum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class NeutronSample(CDObject):
    timestamp: datetime
    """UTC instant of the measurement."""

    rate: float
    """Neutron counts per second."""

    corrected: bool = True
    """Whether the rate is pressure and efficiency corrected."""

    def __post_init__(self):
        object.__setattr__(self, "timestamp", to_utc(self.timestamp))
        if not math.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"neutron rate must be finite and >= 0, got {self.rate}")


@dataclass
class NeutronSeries(CDObject):
    """Time series of neutron counts from one ground monitor."""

    samples: list[NeutronSample] = field(default_factory=list)
    """Samples with strictly increasing timestamps."""

    monitor_id: str = ""
    """Opaque identifier of the monitor."""

    def __post_init__(self):
        for previous, sample in zip(self.samples, self.samples[1:]):
            if sample.timestamp <= previous.timestamp:
                raise ValueError(
                    f"timestamps must be strictly increasing: {sample.timestamp} "
                    f"after {previous.timestamp}"
                )
        if len({s.corrected for s in self.samples}) > 1:
            raise ValueError("all samples of a series must share the corrected flag")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[NeutronSample]:
        return iter(self.samples)

    @property
    def corrected(self) -> bool:
        return self.samples[0].corrected if self.samples else True

    @property
    def epochs(self) -> np.ndarray:
        """Sample timestamps as seconds since the epoch."""
        return epoch_array(s.timestamp for s in self.samples)

    @property
    def rates(self) -> np.ndarray:
        return np.array([s.rate for s in self.samples], dtype=float)

    def to_series(self) -> pd.Series:
        """Rates as a pandas Series with a UTC DatetimeIndex."""
        index = pd.to_datetime(self.epochs, unit="s", utc=True)
        return pd.Series(self.rates, index=index, name=self.monitor_id or "rate")


def _check_non_negative(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if value is not None and value < 0:
            raise ValueError(f"{name} must be >= 0, got {value}")


@dataclass(frozen=True)
class CorrectedErrorEvent(CDObject):
    """One corrected error record.

    The record may stand for several errors (``multiplicity``) when the
    machine-check registers overflowed, in which case the location is only
    known for one of them, or not at all.
    """

    timestamp: datetime
    node: str
    dimm: str
    rank: int | None = None
    bank: int | None = None
    row: int | None = None
    column: int | None = None
    detection: Detection = Detection.UNKNOWN
    multiplicity: int = 1

    def __post_init__(self):
        object.__setattr__(self, "timestamp", to_utc(self.timestamp))
        if self.multiplicity < 1:
            raise ValueError(f"multiplicity must be >= 1, got {self.multiplicity}")
        _check_non_negative(self, "rank", "bank", "row", "column")
        if (self.row is not None or self.column is not None) and (
            self.rank is None or self.bank is None
        ):
            raise ValueError("row/column given without rank and bank")

    @property
    def located(self) -> bool:
        """Whether the full (rank, bank, row, column) location is known."""
        return None not in (self.rank, self.bank, self.row, self.column)

    @property
    def cell(self) -> tuple[int, int, int, int] | None:
        if not self.located:
            return None
        return self.rank, self.bank, self.row, self.column


@dataclass(frozen=True)
class UncorrectedErrorEvent(CDObject):
    timestamp: datetime
    node: str
    dimm: str
    cause: UeCause

    def __post_init__(self):
        object.__setattr__(self, "timestamp", to_utc(self.timestamp))

    @property
    def multiplicity(self) -> int:
        return 1


@dataclass(frozen=True)
class ScrubberErrorEvent(CDObject):
    """Memory corruption found by a software scrubber on unprotected memory."""

    timestamp: datetime
    node: str
    address: int
    bits_flipped: int

    def __post_init__(self):
        object.__setattr__(self, "timestamp", to_utc(self.timestamp))
        _check_non_negative(self, "address")
        if self.bits_flipped < 1:
            raise ValueError(f"bits_flipped must be >= 1, got {self.bits_flipped}")

    @property
    def multiplicity(self) -> int:
        return 1


@dataclass(frozen=True)
class ScanExposureRecord(CDObject):
    """Amount of memory traversed by the scrubber of a node in an interval."""

    interval_start: datetime
    interval_end: datetime
    node: str
    mb_scanned: float

    def __post_init__(self):
        object.__setattr__(self, "interval_start", to_utc(self.interval_start))
        object.__setattr__(self, "interval_end", to_utc(self.interval_end))
        if not self.interval_start < self.interval_end:
            raise ValueError("interval_start must be before interval_end")
        if not math.isfinite(self.mb_scanned) or self.mb_scanned < 0:
            raise ValueError(f"mb_scanned must be >= 0, got {self.mb_scanned}")


@dataclass(frozen=True)
class DimmRecord(CDObject):
    dimm: str
    node: str
    socket: str
    rack: str
    manufacturer: Manufacturer
    technology: Technology
    capacity_mb: int

    def __post_init__(self):
        if self.capacity_mb < 1:
            raise ValueError(f"capacity_mb must be positive, got {self.capacity_mb}")


@dataclass(frozen=True)
class JobRecord(CDObject):
    """One job of a (synthetic) job log, used to value failure mitigation."""

    node: str
    start: datetime
    end: datetime

    def __post_init__(self):
        object.__setattr__(self, "start", to_utc(self.start))
        object.__setattr__(self, "end", to_utc(self.end))
        if self.end < self.start:
            raise ValueError("job ends before it starts")

    @property
    def node_hours(self) -> float:
        return (self.end - self.start).total_seconds() / 3600.0


@dataclass(frozen=True)
class Scope(CDObject):
    kind: ScopeKind = ScopeKind.SYSTEM
    id: str | None = None

    def __post_init__(self):
        if (self.kind == ScopeKind.SYSTEM) != (self.id is None):
            raise ValueError("only the system scope has no id")

    @classmethod
    def system(cls) -> Scope:
        return cls(ScopeKind.SYSTEM, None)

    @property
    def sort_key(self) -> tuple[int, str]:
        return self.kind.rank, self.id or ""

    def __str__(self):
        if self.id is None:
            return self.kind.value
        return f"{self.kind.value}:{self.id}"


@dataclass
class Topology(CDObject):
    """DIMM inventory with its rack > node > socket > DIMM containment."""

    dimms: list[DimmRecord] = field(default_factory=list)

    def __post_init__(self):
        records = list(self.dimms)
        self.dimms = []
        self._by_dimm: dict[str, DimmRecord] = {}
        self._rack_of_node: dict[str, str] = {}
        self._node_of_socket: dict[str, str] = {}
        for record in records:
            self.add_dimm(record)

    def add_dimm(self, record: DimmRecord, lineno: int | None = None) -> None:
        """Add a DIMM, checking id uniqueness and containment consistency."""
        if record.dimm in self._by_dimm:
            raise DuplicateDimmError(lineno, f"duplicate DIMM id {record.dimm!r}")
        rack = self._rack_of_node.get(record.node)
        if rack is not None and rack != record.rack:
            raise InconsistentContainmentError(
                lineno,
                f"node {record.node!r} declared in racks {rack!r} and {record.rack!r}",
            )
        node = self._node_of_socket.get(record.socket)
        if node is not None and node != record.node:
            raise InconsistentContainmentError(
                lineno,
                f"socket {record.socket!r} declared in nodes {node!r} and {record.node!r}",
            )
        self._rack_of_node[record.node] = record.rack
        self._node_of_socket[record.socket] = record.node
        self._by_dimm[record.dimm] = record
        self.dimms.append(record)

    def __len__(self) -> int:
        return len(self.dimms)

    def get(self, dimm: str) -> DimmRecord | None:
        return self._by_dimm.get(dimm)

    @property
    def racks(self) -> list[str]:
        return sorted(set(self._rack_of_node.values()))

    @property
    def nodes(self) -> list[str]:
        return sorted(self._rack_of_node)

    @property
    def sockets(self) -> list[str]:
        return sorted(self._node_of_socket)

    @property
    def dimm_ids(self) -> list[str]:
        return sorted(self._by_dimm)

    def rack_of_node(self, node: str) -> str | None:
        return self._rack_of_node.get(node)

    def scope_count(self, include_dimms: bool = False) -> int:
        """Number of system scopes: whole system, racks, nodes, sockets (and DIMMs)."""
        count = 1 + len(self.racks) + len(self.nodes) + len(self.sockets)
        if include_dimms:
            count += len(self._by_dimm)
        return count

    def scopes(
        self,
        kinds: list[ScopeKind] | None = None,
        include_dimms: bool = False,
    ) -> list[Scope]:
        """All scopes of the given kinds, from the coarsest to the finest."""
        if kinds is None:
            kinds = [ScopeKind.SYSTEM, ScopeKind.RACK, ScopeKind.NODE, ScopeKind.SOCKET]
            if include_dimms:
                kinds.append(ScopeKind.DIMM)
        ids = {
            ScopeKind.RACK: self.racks,
            ScopeKind.NODE: self.nodes,
            ScopeKind.SOCKET: self.sockets,
            ScopeKind.DIMM: self.dimm_ids,
        }
        scopes = []
        for kind in sorted(set(kinds), key=lambda k: k.rank):
            if kind == ScopeKind.SYSTEM:
                scopes.append(Scope.system())
            else:
                scopes.extend(Scope(kind, i) for i in ids[kind])
        return scopes

    def dimms_in(self, scope: Scope) -> list[DimmRecord]:
        """DIMMs contained in a scope."""
        if scope.kind == ScopeKind.SYSTEM:
            return list(self.dimms)
        attribute = scope.kind.value
        return [d for d in self.dimms if getattr(d, attribute) == scope.id]


@dataclass(frozen=True)
class ObservationInterval(CDObject):
    """Half-open interval [start, end) of UTC instants."""

    start: datetime
    end: datetime

    def __post_init__(self):
        object.__setattr__(self, "start", to_utc(self.start))
        object.__setattr__(self, "end", to_utc(self.end))
        if self.end < self.start:
            raise ValueError("observation interval ends before it starts")

    def contains(self, dt: datetime) -> bool:
        return self.start <= to_utc(dt) < self.end

    @property
    def duration(self) -> timedelta:
        return self.end - self.start


@dataclass(frozen=True)
class Finding(CDObject):
    """One problem reported by the dataset validation."""

    severity: Severity
    kind: str
    message: str
    ref: str | None = None


@dataclass
class Dataset(CDObject):
    """All the inputs of a study, as parsed from a dataset directory."""

    topology: Topology = field(default_factory=Topology)
    ce_events: list[CorrectedErrorEvent] = field(default_factory=list)
    ue_events: list[UncorrectedErrorEvent] = field(default_factory=list)
    scrub_events: list[ScrubberErrorEvent] = field(default_factory=list)
    exposure: list[ScanExposureRecord] = field(default_factory=list)
    neutron: NeutronSeries | None = None
    interval: ObservationInterval | None = None

    def observation_interval(self) -> ObservationInterval:
        """
        The declared observation interval or, if none was declared, the
        smallest interval of whole hours covering every timestamp.
        """
        if self.interval is not None:
            return self.interval
        stamps = [e.timestamp for e in self.ce_events]
        stamps += [e.timestamp for e in self.ue_events]
        stamps += [e.timestamp for e in self.scrub_events]
        stamps += [r.interval_start for r in self.exposure]
        stamps += [r.interval_end for r in self.exposure]
        if self.neutron is not None:
            stamps += [s.timestamp for s in self.neutron]
        if not stamps:
            raise ValueError("cannot derive an observation interval from an empty dataset")
        start = floor_hour(min(stamps))
        end = ceil_hour(max(stamps) + timedelta(seconds=1))
        return ObservationInterval(start, end)
