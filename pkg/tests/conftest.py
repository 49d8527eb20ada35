from dataclasses import is_dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import pytest

module_dir = Path(__file__).resolve().parent
test_dir = module_dir / "test_data"
TEST_DIR = test_dir.resolve()


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def test_dir():
    return TEST_DIR


@pytest.fixture(scope="session")
def log_to_stdout():
    import logging
    import sys

    # Set Logging
    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    ch = logging.StreamHandler(sys.stdout)
    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    ch.setFormatter(formatter)
    root.addHandler(ch)


@pytest.fixture
def small_topology():
    """Two racks, three nodes, four sockets and five DIMMs.

    r0/n0: sockets n0-s0 (d0, d1: A 3x) and n0-s1 (d2: A 3x)
    r0/n1: socket n1-s0 (d3: B 2y)
    r1/n2: socket n2-s0 (d4: C 2z)
    """
    from cosmicdram.core.data_objects import (
        DimmRecord,
        Manufacturer,
        Technology,
        Topology,
    )

    rows = [
        ("d0", "n0", "n0-s0", "r0", Manufacturer.A, Technology.T3X),
        ("d1", "n0", "n0-s0", "r0", Manufacturer.A, Technology.T3X),
        ("d2", "n0", "n0-s1", "r0", Manufacturer.A, Technology.T3X),
        ("d3", "n1", "n1-s0", "r0", Manufacturer.B, Technology.T2Y),
        ("d4", "n2", "n2-s0", "r1", Manufacturer.C, Technology.T2Z),
    ]
    return Topology(
        [
            DimmRecord(dimm, node, socket, rack, manufacturer, technology, 8192)
            for dimm, node, socket, rack, manufacturer, technology in rows
        ]
    )


@pytest.fixture
def small_synth_config():
    from cosmicdram.synth import SynthConfig

    return SynthConfig(
        seed=7,
        start=utc(2015, 1, 1),
        end=utc(2015, 1, 15),
        topology={"racks": 1, "nodes_per_rack": 2, "sockets_per_node": 1, "dimms_per_socket": 2},
        neutron={"base_rate": 71.0, "noise_std": 1.0},
        fault={
            "kind": "null",
            "rate": 0.05,
            "ue_rate": 0.01,
            "scrub_rate": 0.05,
            "mb_per_hour": 100.0,
        },
    )


@pytest.fixture
def dataset_dir(tmp_path, small_synth_config):
    """A synthetic dataset directory, as written by ``cosmicdram synth``."""
    from cosmicdram.synth import generate, write_dataset

    dataset, jobs = generate(small_synth_config)
    out = tmp_path / "dataset"
    write_dataset(dataset, out, jobs)
    return out


class TestUtils:
    import json

    from monty.json import MSONable
    from monty.serialization import MontyDecoder, MontyEncoder

    @classmethod
    def is_msonable(cls, obj, obj_cls=None):
        if not isinstance(obj, cls.MSONable):
            return False
        obj_dict = obj.as_dict()
        if not obj_dict == obj.__class__.from_dict(obj_dict).as_dict():
            return False
        json_string = cls.json.dumps(obj_dict, cls=cls.MontyEncoder)
        obj_from_json = cls.json.loads(json_string, cls=cls.MontyDecoder)
        # When the class is defined as an inner class, the MontyDecoder is unable
        # to find it automatically. This is only used in the core/test_base tests.
        if obj_cls is not None:
            obj_from_json = obj_cls.from_dict(obj_from_json)
        if not isinstance(obj_from_json, obj.__class__):
            return False
        if is_dataclass(obj) or isinstance(obj, Enum):
            return obj_from_json == obj
        return obj_from_json.as_dict() == obj.as_dict()

    @classmethod
    def inkwargs_outref(cls, in_out_ref, inkey, outkey):
        dec = cls.MontyDecoder()
        inkwargs_string = in_out_ref[inkey]
        inkwargs = dec.decode(inkwargs_string)
        outref_string = in_out_ref[outkey]
        outref = dec.decode(outref_string)
        return inkwargs, outref


@pytest.fixture(scope="session")
def test_utils():
    return TestUtils
