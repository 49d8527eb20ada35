import dataclasses
from datetime import datetime, timezone

import numpy as np
import pytest

from cosmicdram.classify import label_transience
from cosmicdram.core.data_objects import NeutronSeries
from cosmicdram.core.exceptions import ConfigurationError
from cosmicdram.manager import StudyManager
from cosmicdram.synth import (
    FaultKind,
    FaultModel,
    NeutronModel,
    SynthConfig,
    TopologyShape,
    gen_errors,
    gen_jobs,
    gen_neutron,
    gen_topology,
    generate,
    hourly_modulation,
    write_dataset,
)


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


class TestConfig:
    def test_dict_sections(self, small_synth_config):
        assert isinstance(small_synth_config.topology, TopologyShape)
        assert isinstance(small_synth_config.neutron, NeutronModel)
        assert isinstance(small_synth_config.fault, FaultModel)
        assert small_synth_config.fault.kind == FaultKind.NULL

    def test_string_times(self):
        config = SynthConfig(start="2015-01-01T00:00:00Z", end="2015-02-01T00:00:00Z")
        assert config.start == utc(2015, 1, 1)
        assert len(config.hour_starts()) == 31 * 24

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"start": utc(2015, 2, 1), "end": utc(2015, 1, 1)},
            {"mean_job_hours": 0},
            {"topology": {"racks": 0}},
            {"neutron": {"noise_std": -1}},
            {"fault": {"multiplier": 0.5}},
            {"fault": {"percentile": 100}},
            {"fault": {"burst_hour": 24}},
            {"fault": {"rate": -1}},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            SynthConfig(**kwargs)

    def test_from_file(self, tmp_path):
        path = tmp_path / "synth.yaml"
        path.write_text(
            "seed: 3\n"
            "start: '2015-01-01T00:00:00Z'\n"
            "end: '2015-01-08T00:00:00Z'\n"
            "topology: {racks: 2, nodes_per_rack: 1}\n"
            "fault: {kind: hot_dimm, hot_dimms: 1, repeat_rate: 0.2}\n"
        )
        config = SynthConfig.from_file(path)
        assert config.seed == 3
        assert config.topology.racks == 2
        assert config.fault.kind == FaultKind.HOT_DIMM
        assert config.end == utc(2015, 1, 8)

    def test_from_file_invalid(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError):
            SynthConfig.from_file(path)
        path.write_text("seed: 1\nflux: 3\n")
        with pytest.raises(ConfigurationError, match="flux"):
            SynthConfig.from_file(path)


class TestTopology:
    def test_shape(self):
        config = SynthConfig(topology={"racks": 2, "nodes_per_rack": 3})
        topology = gen_topology(config)
        assert len(topology.racks) == 2
        assert len(topology.nodes) == 6
        assert len(topology.sockets) == 12
        assert len(topology) == 24
        assert topology.scope_count() == 1 + 2 + 6 + 12

    def test_node_homogeneous(self):
        topology = gen_topology(SynthConfig(seed=5))
        for node in topology.nodes:
            records = [d for d in topology.dimms if d.node == node]
            assert len({(d.manufacturer, d.technology) for d in records}) == 1


class TestNeutron:
    def test_constant(self):
        config = SynthConfig(neutron={"base_rate": 70.0})
        neutron = gen_neutron(config)
        assert len(neutron) == len(config.hour_starts())
        assert set(neutron.rates) == {70.0}
        assert neutron.monitor_id == "synthetic"

    def test_trend(self):
        config = SynthConfig(
            start=utc(2015, 1, 1),
            end=utc(2017, 1, 1),
            neutron={"base_rate": 70.0, "trend_per_day": 0.01},
        )
        rates = gen_neutron(config).rates
        assert len(rates) == 731 * 24
        assert rates[0] == 70.0
        assert rates[24 * 730] == pytest.approx(77.3)
        assert np.all(np.diff(rates) > 0)

    def test_noise_clamped(self):
        config = SynthConfig(neutron={"base_rate": 0.5, "noise_std": 5.0})
        assert gen_neutron(config).rates.min() >= 0.0


class TestErrors:
    def test_reproducible(self, small_synth_config):
        first, first_jobs = generate(small_synth_config)
        second, second_jobs = generate(small_synth_config)
        assert first == second
        assert first_jobs == second_jobs
        assert len(first.ce_events) > 0

    def test_seed_changes_output(self, small_synth_config):
        other = SynthConfig(**{**small_synth_config.__dict__, "seed": 8})
        assert generate(other)[0].ce_events != generate(small_synth_config)[0].ce_events

    def test_streams_independent(self, small_synth_config):
        dataset, _ = generate(small_synth_config)
        fault = FaultModel(**{**small_synth_config.fault.__dict__, "ue_rate": 0.5})
        louder = SynthConfig(**{**small_synth_config.__dict__, "fault": fault})
        louder_dataset, _ = generate(louder)
        assert louder_dataset.ce_events == dataset.ce_events
        assert len(louder_dataset.ue_events) > len(dataset.ue_events)

    def test_sorted_and_inside(self, small_synth_config):
        dataset, _ = generate(small_synth_config)
        stamps = [e.timestamp for e in dataset.ce_events]
        assert stamps == sorted(stamps)
        interval = small_synth_config.interval
        assert all(interval.contains(t) for t in stamps)
        assert len(dataset.exposure) == 2 * len(small_synth_config.hour_starts())

    def test_hot_dimm(self):
        config = SynthConfig(
            seed=2,
            start=utc(2015, 1, 1),
            end=utc(2015, 1, 11),
            fault={"kind": "hot_dimm", "rate": 0.0, "hot_dimms": 1, "hot_cells": 3, "repeat_rate": 1.0},
        )
        dataset, _ = generate(config)
        assert len({e.dimm for e in dataset.ce_events}) == 1
        assert len({(e.rank, e.bank, e.row) for e in dataset.ce_events}) == 1
        assert len({e.column for e in dataset.ce_events}) == 3
        assert not any(label_transience(dataset.ce_events))

    def test_burst_hour(self):
        config = SynthConfig(
            start=utc(2015, 1, 1),
            end=utc(2015, 1, 11),
            fault={"kind": "hot_dimm", "rate": 0.0, "hot_dimms": 2, "repeat_rate": 0.5, "burst_hour": 9},
        )
        dataset, _ = generate(config)
        assert dataset.ce_events
        assert {e.timestamp.hour for e in dataset.ce_events} == {9}

    def test_threshold_modulation(self):
        config = SynthConfig(
            neutron={"base_rate": 70.0, "noise_std": 1.0},
            fault={"kind": "threshold_coupled", "percentile": 90, "multiplier": 10},
        )
        neutron = gen_neutron(config)
        factor = hourly_modulation(config, neutron)
        assert set(np.unique(factor)) == {1.0, 10.0}
        threshold = np.percentile(neutron.rates, 90)
        np.testing.assert_array_equal(factor == 10.0, neutron.rates > threshold)

    def test_linear_modulation(self):
        config = SynthConfig(
            neutron={"base_rate": 70.0, "noise_std": 2.0},
            fault={"kind": "linear_coupled", "slope": 0.05},
        )
        neutron = gen_neutron(config)
        factor = hourly_modulation(config, neutron)
        assert factor.min() >= 0.0
        assert np.corrcoef(factor, neutron.rates)[0, 1] > 0.99

    def test_null_modulation(self, small_synth_config):
        neutron = gen_neutron(small_synth_config)
        assert np.all(hourly_modulation(small_synth_config, neutron) == 1.0)

    def test_gen_errors_topology_default(self, small_synth_config):
        neutron = gen_neutron(small_synth_config)
        logs = gen_errors(small_synth_config, neutron)
        assert {e.node for e in logs.ce_events} <= set(gen_topology(small_synth_config).nodes)


class TestJobs:
    def test_back_to_back(self, small_synth_config):
        jobs = gen_jobs(small_synth_config)
        hours = (small_synth_config.end - small_synth_config.start).total_seconds() / 3600
        for node in gen_topology(small_synth_config).nodes:
            node_jobs = sorted((j for j in jobs if j.node == node), key=lambda j: j.start)
            assert node_jobs[0].start == small_synth_config.start
            assert node_jobs[-1].end == small_synth_config.end
            assert sum(j.node_hours for j in node_jobs) == pytest.approx(hours)
            for previous, job in zip(node_jobs, node_jobs[1:]):
                assert job.start == previous.end


class TestWriteDataset:
    def test_round_trip(self, tmp_path, small_synth_config):
        dataset, jobs = generate(small_synth_config)
        written = write_dataset(dataset, tmp_path / "out", jobs)
        assert set(written) == {
            "neutron", "ce", "ue", "scrub", "exposure", "inventory", "jobs", "metadata"
        }
        manager = StudyManager(tmp_path / "out")
        loaded = manager.load()
        assert loaded.topology == dataset.topology
        assert loaded.ce_events == dataset.ce_events
        assert loaded.ue_events == dataset.ue_events
        assert loaded.scrub_events == dataset.scrub_events
        assert loaded.exposure == dataset.exposure
        assert list(loaded.neutron) == list(dataset.neutron)
        assert loaded.neutron.monitor_id == "synthetic"
        assert loaded.interval == dataset.interval
        assert manager.jobs() == jobs

    def test_uncorrected_neutron(self, tmp_path, small_synth_config):
        dataset, _ = generate(small_synth_config)
        dataset.neutron = NeutronSeries(
            [dataclasses.replace(s, corrected=False) for s in dataset.neutron],
            monitor_id="raw",
        )
        write_dataset(dataset, tmp_path / "out")
        manager = StudyManager(tmp_path / "out")
        assert manager.metadata()["corrected"] is False
        loaded = manager.load().neutron
        assert loaded.corrected is False
        assert loaded.monitor_id == "raw"
        assert list(loaded) == list(dataset.neutron)

    def test_deterministic_files(self, tmp_path, small_synth_config):
        for name in ("a", "b"):
            dataset, jobs = generate(small_synth_config)
            write_dataset(dataset, tmp_path / name, jobs)
        for path in sorted((tmp_path / "a").iterdir()):
            assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()
