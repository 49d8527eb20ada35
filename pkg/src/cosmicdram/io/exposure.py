from __future__ import annotations

from cosmicdram.core.data_objects import ScanExposureRecord
from cosmicdram.io.base import BaseLogIO, format_float, parse_float, parse_id, parse_time
from cosmicdram.utils import format_timestamp


class ExposureLogIO(BaseLogIO):
    """Reader/writer of scrubber exposure records (memory scanned per interval)."""

    header = ("interval_start", "interval_end", "node", "mb_scanned")

    def _parse_row(self, row, lineno) -> ScanExposureRecord:
        return ScanExposureRecord(
            interval_start=parse_time(row, "interval_start"),
            interval_end=parse_time(row, "interval_end"),
            node=parse_id(row, "node"),
            mb_scanned=parse_float(row, "mb_scanned"),
        )

    def _format_row(self, obj: ScanExposureRecord) -> list[str]:
        return [
            format_timestamp(obj.interval_start),
            format_timestamp(obj.interval_end),
            obj.node,
            format_float(obj.mb_scanned),
        ]
