from cosmicdram.io.base import BaseLogIO, Source
from cosmicdram.io.errors import CeLogIO, ScrubLogIO, UeLogIO
from cosmicdram.io.exposure import ExposureLogIO
from cosmicdram.io.jobs import JobLogIO
from cosmicdram.io.inventory import InventoryIO
from cosmicdram.io.neutron import NeutronLogIO
from cosmicdram.io.validation import validate_dataset

log_mapping = {
    "neutron": NeutronLogIO,
    "ce": CeLogIO,
    "ue": UeLogIO,
    "scrub": ScrubLogIO,
    "exposure": ExposureLogIO,
    "inventory": InventoryIO,
    "jobs": JobLogIO,
}

DATASET_FILES = {
    "neutron": "neutron.csv",
    "ce": "ce.csv",
    "ue": "ue.csv",
    "scrub": "scrub.csv",
    "exposure": "exposure.csv",
    "inventory": "inventory.csv",
    "jobs": "jobs.csv",
}
DATASET_METADATA = "dataset.json"


def parse_neutron_log(source: Source, monitor_id: str = "", corrected: bool = True):
    return NeutronLogIO(monitor_id=monitor_id, corrected=corrected).parse(source)


def parse_ce_log(source: Source):
    return CeLogIO().parse(source)


def parse_ue_log(source: Source):
    return UeLogIO().parse(source)


def parse_scrub_log(source: Source):
    return ScrubLogIO().parse(source)


def parse_exposure_log(source: Source):
    return ExposureLogIO().parse(source)


def load_inventory(source: Source):
    return InventoryIO().parse(source)


def parse_job_log(source: Source):
    return JobLogIO().parse(source)
