from __future__ import annotations

from cosmicdram.core.data_objects import JobRecord
from cosmicdram.io.base import BaseLogIO, parse_id, parse_time
from cosmicdram.utils import format_timestamp


class JobLogIO(BaseLogIO):
    """Reader/writer of job logs, used to value the failure mitigation."""

    header = ("node", "start", "end")

    def _parse_row(self, row, lineno) -> JobRecord:
        return JobRecord(
            node=parse_id(row, "node"),
            start=parse_time(row, "start"),
            end=parse_time(row, "end"),
        )

    def _format_row(self, obj: JobRecord) -> list[str]:
        return [obj.node, format_timestamp(obj.start), format_timestamp(obj.end)]
