from __future__ import annotations

from cosmicdram.core.data_objects import NeutronSample, NeutronSeries
from cosmicdram.core.exceptions import NonMonotonicTimestampError
from cosmicdram.io.base import BaseLogIO, format_float, parse_float, parse_time
from cosmicdram.utils import format_timestamp


class NeutronLogIO(BaseLogIO):
    """Reader/writer of neutron monitor logs (``timestamp,rate``).

    Files downloaded from a neutron monitor database are expected to be
    converted to this schema, with the rates already corrected for pressure
    and detector efficiency unless ``corrected`` is False.
    """

    header = ("timestamp", "rate")

    def __init__(self, monitor_id: str = "", corrected: bool = True):
        self.monitor_id = monitor_id
        self.corrected = corrected
        self._last = None

    def parse(self, source) -> NeutronSeries:
        self._last = None
        return super().parse(source)

    def _parse_row(self, row, lineno) -> NeutronSample:
        return NeutronSample(
            timestamp=parse_time(row, "timestamp"),
            rate=parse_float(row, "rate"),
            corrected=self.corrected,
        )

    def _check_object(self, obj: NeutronSample, lineno: int) -> None:
        if self._last is not None and obj.timestamp <= self._last:
            raise NonMonotonicTimestampError(
                lineno, f"timestamp {format_timestamp(obj.timestamp)} not increasing"
            )
        self._last = obj.timestamp

    def _finalize(self, objects) -> NeutronSeries:
        return NeutronSeries(samples=objects, monitor_id=self.monitor_id)

    def _iter_objects(self, objects: NeutronSeries):
        return iter(objects.samples)

    def _format_row(self, obj: NeutronSample) -> list[str]:
        return [format_timestamp(obj.timestamp), format_float(obj.rate)]
