from __future__ import annotations

from cosmicdram.core.data_objects import DimmRecord, Manufacturer, Technology, Topology
from cosmicdram.core.exceptions import MalformedRowError
from cosmicdram.io.base import BaseLogIO, parse_id, parse_int


class InventoryIO(BaseLogIO):
    """Reader/writer of the DIMM inventory.

    Duplicate DIMM ids and nodes (sockets) declared under two racks (nodes)
    are reported at the offending line.
    """

    header = (
        "dimm",
        "node",
        "socket",
        "rack",
        "manufacturer",
        "technology",
        "capacity_mb",
    )

    def __init__(self):
        self._topology = Topology()

    def parse(self, source) -> Topology:
        self._topology = Topology()
        return super().parse(source)

    def _parse_row(self, row, lineno) -> DimmRecord:
        manufacturer = row["manufacturer"]
        if manufacturer not in ("A", "B", "C"):
            raise MalformedRowError(lineno, f"unknown manufacturer {manufacturer!r}")
        technology = row["technology"]
        if technology not in ("3x", "2y", "2z"):
            raise MalformedRowError(lineno, f"unknown technology {technology!r}")
        return DimmRecord(
            dimm=parse_id(row, "dimm"),
            node=parse_id(row, "node"),
            socket=parse_id(row, "socket"),
            rack=parse_id(row, "rack"),
            manufacturer=Manufacturer(manufacturer),
            technology=Technology(technology),
            capacity_mb=parse_int(row, "capacity_mb"),
        )

    def _check_object(self, obj: DimmRecord, lineno: int) -> None:
        self._topology.add_dimm(obj, lineno)

    def _finalize(self, objects) -> Topology:
        return self._topology

    def _iter_objects(self, objects: Topology):
        return iter(objects.dimms)

    def _format_row(self, obj: DimmRecord) -> list[str]:
        return [
            obj.dimm,
            obj.node,
            obj.socket,
            obj.rack,
            obj.manufacturer.value,
            obj.technology.token,
            str(obj.capacity_mb),
        ]
