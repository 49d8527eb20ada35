"""Unit tests for the core.data_objects module of CosmicDRAM."""
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

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
    Scope,
    ScopeKind,
    ScrubberErrorEvent,
    Technology,
    TestStatus,
    Topology,
    UeCause,
    UncorrectedErrorEvent,
)
from cosmicdram.core.exceptions import DuplicateDimmError, InconsistentContainmentError


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


class TestEnums:
    def test_detection_tokens(self):
        assert Detection("read") == Detection.MEMORY_READ
        assert Detection("scrub") == Detection.PATROL_SCRUB
        assert Detection("patrol_scrub") == Detection.PATROL_SCRUB
        assert Detection.PATROL_SCRUB.token == "scrub"

    def test_technology_tokens(self):
        assert Technology("3x") == Technology.T3X
        assert Technology("2z").token == "2z"

    def test_scope_kind_rank(self):
        ranks = [kind.rank for kind in ScopeKind]
        assert ranks == sorted(ranks)
        assert ScopeKind.SYSTEM.rank < ScopeKind.DIMM.rank

    def test_test_status_values(self):
        assert {s.value for s in TestStatus} == {
            "ok",
            "untestable_constant",
            "too_few_points",
            "absent_combination",
        }

    def test_msonable(self, test_utils):
        assert test_utils.is_msonable(Detection.PATROL_SCRUB)
        assert test_utils.is_msonable(UeCause.SCRUB_FAILED)


class TestNeutronSeries:
    def test_naive_timestamps_are_utc(self):
        sample = NeutronSample(datetime(2015, 6, 1, 0, 0, 0, 500), 71.3)
        assert sample.timestamp == utc(2015, 6, 1)

    def test_invalid_rate(self):
        with pytest.raises(ValueError, match="finite"):
            NeutronSample(utc(2015, 6, 1), -1.0)
        with pytest.raises(ValueError, match="finite"):
            NeutronSample(utc(2015, 6, 1), float("nan"))

    def test_monotonic(self):
        samples = [NeutronSample(utc(2015, 6, 1), 70.0), NeutronSample(utc(2015, 6, 1), 71.0)]
        with pytest.raises(ValueError, match="strictly increasing"):
            NeutronSeries(samples)

    def test_corrected_flag_shared(self):
        samples = [
            NeutronSample(utc(2015, 6, 1), 70.0, corrected=True),
            NeutronSample(utc(2015, 6, 1, 1), 71.0, corrected=False),
        ]
        with pytest.raises(ValueError, match="corrected"):
            NeutronSeries(samples)

    def test_arrays(self):
        series = NeutronSeries(
            [NeutronSample(utc(1970, 1, 1, 1), 70.0), NeutronSample(utc(1970, 1, 1, 2), 72.0)],
            monitor_id="JUNG",
        )
        assert len(series) == 2
        np.testing.assert_array_equal(series.epochs, [3600, 7200])
        np.testing.assert_array_equal(series.rates, [70.0, 72.0])
        pd_series = series.to_series()
        assert pd_series.name == "JUNG"
        assert pd_series.index.tz is not None

    def test_as_dict(self):
        series = NeutronSeries([NeutronSample(utc(2015, 6, 1), 71.3)], monitor_id="JUNG")
        assert NeutronSeries.from_dict(series.as_dict()) == series


class TestEvents:
    def test_ce_location(self):
        event = CorrectedErrorEvent(utc(2015, 6, 1), "n0", "d0", 0, 1, 5, 9)
        assert event.located
        assert event.cell == (0, 1, 5, 9)
        partial = CorrectedErrorEvent(utc(2015, 6, 1), "n0", "d0", multiplicity=3)
        assert not partial.located
        assert partial.cell is None
        assert partial.multiplicity == 3

    def test_ce_invalid(self):
        with pytest.raises(ValueError, match="multiplicity"):
            CorrectedErrorEvent(utc(2015, 6, 1), "n0", "d0", multiplicity=0)
        with pytest.raises(ValueError, match="without rank and bank"):
            CorrectedErrorEvent(utc(2015, 6, 1), "n0", "d0", rank=0, column=9)
        with pytest.raises(ValueError, match="rank"):
            CorrectedErrorEvent(utc(2015, 6, 1), "n0", "d0", rank=-1)

    def test_ue_and_scrub(self):
        ue = UncorrectedErrorEvent(utc(2015, 6, 1), "n0", "d0", UeCause.SCRUB_FAILED)
        assert ue.multiplicity == 1
        scrub = ScrubberErrorEvent(utc(2015, 6, 1), "n0", 4096, 2)
        assert scrub.multiplicity == 1
        with pytest.raises(ValueError, match="bits_flipped"):
            ScrubberErrorEvent(utc(2015, 6, 1), "n0", 4096, 0)

    def test_exposure(self):
        with pytest.raises(ValueError, match="before"):
            ScanExposureRecord(utc(2015, 6, 1), utc(2015, 6, 1), "n0", 5.0)
        with pytest.raises(ValueError, match="mb_scanned"):
            ScanExposureRecord(utc(2015, 6, 1), utc(2015, 6, 2), "n0", -5.0)

    def test_job(self):
        job = JobRecord("n0", utc(2015, 6, 1), utc(2015, 6, 1, 6, 30))
        assert job.node_hours == pytest.approx(6.5)
        with pytest.raises(ValueError, match="ends before"):
            JobRecord("n0", utc(2015, 6, 2), utc(2015, 6, 1))

    def test_as_dict(self):
        event = CorrectedErrorEvent(
            utc(2015, 6, 1), "n0", "d0", 0, 1, 5, 9, Detection.PATROL_SCRUB, 2
        )
        assert CorrectedErrorEvent.from_dict(event.as_dict()) == event
        ue = UncorrectedErrorEvent(utc(2015, 6, 1), "n0", "d0", UeCause.UE_WARNING)
        assert UncorrectedErrorEvent.from_dict(ue.as_dict()) == ue


class TestScope:
    def test_system(self):
        assert Scope.system() == Scope()
        assert str(Scope.system()) == "system"
        assert str(Scope(ScopeKind.NODE, "n0")) == "node:n0"

    def test_invalid(self):
        with pytest.raises(ValueError):
            Scope(ScopeKind.SYSTEM, "x")
        with pytest.raises(ValueError):
            Scope(ScopeKind.RACK)

    def test_sort_key(self):
        scopes = [Scope(ScopeKind.NODE, "n1"), Scope.system(), Scope(ScopeKind.RACK, "r9")]
        assert sorted(scopes, key=lambda s: s.sort_key) == [
            Scope.system(),
            Scope(ScopeKind.RACK, "r9"),
            Scope(ScopeKind.NODE, "n1"),
        ]


class TestTopology:
    def test_indexes(self, small_topology):
        assert len(small_topology) == 5
        assert small_topology.racks == ["r0", "r1"]
        assert small_topology.nodes == ["n0", "n1", "n2"]
        assert small_topology.sockets == ["n0-s0", "n0-s1", "n1-s0", "n2-s0"]
        assert small_topology.rack_of_node("n2") == "r1"
        assert small_topology.get("d3").manufacturer == Manufacturer.B
        assert small_topology.get("unknown") is None

    def test_scopes(self, small_topology):
        assert small_topology.scope_count() == 1 + 2 + 3 + 4
        assert small_topology.scope_count(include_dimms=True) == 15
        scopes = small_topology.scopes()
        assert scopes[0] == Scope.system()
        assert len(scopes) == 10
        assert [s.kind for s in scopes] == sorted((s.kind for s in scopes), key=lambda k: k.rank)
        assert len(small_topology.scopes(include_dimms=True)) == 15
        assert small_topology.scopes([ScopeKind.RACK]) == [
            Scope(ScopeKind.RACK, "r0"),
            Scope(ScopeKind.RACK, "r1"),
        ]

    def test_dimms_in(self, small_topology):
        assert [d.dimm for d in small_topology.dimms_in(Scope(ScopeKind.RACK, "r0"))] == [
            "d0",
            "d1",
            "d2",
            "d3",
        ]
        assert [d.dimm for d in small_topology.dimms_in(Scope(ScopeKind.SOCKET, "n0-s0"))] == [
            "d0",
            "d1",
        ]
        assert len(small_topology.dimms_in(Scope.system())) == 5

    def test_duplicate_dimm(self, small_topology):
        record = small_topology.get("d0")
        with pytest.raises(DuplicateDimmError):
            small_topology.add_dimm(record, lineno=7)

    def test_inconsistent_containment(self):
        topology = Topology()
        topology.add_dimm(
            DimmRecord("d0", "n0", "n0-s0", "r0", Manufacturer.A, Technology.T3X, 1024)
        )
        with pytest.raises(InconsistentContainmentError, match="line 3"):
            topology.add_dimm(
                DimmRecord("d1", "n0", "n0-s0", "r1", Manufacturer.A, Technology.T3X, 1024),
                lineno=3,
            )
        with pytest.raises(InconsistentContainmentError, match="socket"):
            topology.add_dimm(
                DimmRecord("d2", "n1", "n0-s0", "r0", Manufacturer.A, Technology.T3X, 1024)
            )

    def test_scope_count_large(self):
        topology = Topology()
        for n in range(3050):
            for s in range(2):
                topology.add_dimm(
                    DimmRecord(
                        f"n{n}-s{s}-d0",
                        f"n{n}",
                        f"n{n}-s{s}",
                        f"r{n % 37}",
                        Manufacturer.A,
                        Technology.T2Y,
                        4096,
                    )
                )
        assert topology.scope_count() == 1 + 37 + 3050 + 6100 == 9188

    def test_empty(self):
        topology = Topology()
        assert len(topology) == 0
        assert topology.scopes() == [Scope.system()]
        assert topology.scope_count() == 1

    def test_msonable(self, test_utils, small_topology):
        assert test_utils.is_msonable(small_topology)


class TestObservationInterval:
    def test_contains(self):
        interval = ObservationInterval(utc(2015, 1, 1), utc(2015, 1, 2))
        assert interval.contains(utc(2015, 1, 1))
        assert not interval.contains(utc(2015, 1, 2))
        assert interval.duration == timedelta(days=1)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ObservationInterval(utc(2015, 1, 2), utc(2015, 1, 1))


class TestDataset:
    def test_derived_interval(self):
        dataset = Dataset(
            ce_events=[
                CorrectedErrorEvent(utc(2015, 1, 1, 3, 20), "n0", "d0"),
                CorrectedErrorEvent(utc(2015, 1, 2, 5, 0), "n0", "d0"),
            ]
        )
        interval = dataset.observation_interval()
        assert interval.start == utc(2015, 1, 1, 3)
        assert interval.end == utc(2015, 1, 2, 6)

    def test_declared_interval(self):
        declared = ObservationInterval(utc(2015, 1, 1), utc(2015, 2, 1))
        assert Dataset(interval=declared).observation_interval() == declared

    def test_empty(self):
        with pytest.raises(ValueError, match="empty dataset"):
            Dataset().observation_interval()
