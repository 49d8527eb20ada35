from __future__ import annotations

from cosmicdram.core.data_objects import (
    CorrectedErrorEvent,
    Detection,
    ScrubberErrorEvent,
    UeCause,
    UncorrectedErrorEvent,
)
from cosmicdram.core.exceptions import MalformedRowError
from cosmicdram.io.base import (
    BaseLogIO,
    format_optional,
    parse_id,
    parse_int,
    parse_time,
)
from cosmicdram.utils import format_timestamp


class CeLogIO(BaseLogIO):
    """Reader/writer of corrected error logs.

    Each row is one machine-check record. When several errors happened
    between two register reads, ``multiplicity`` holds their number and the
    location fields describe at most one of them. Location fields may be left
    empty when the detail was not logged.
    """

    header = (
        "timestamp",
        "node",
        "dimm",
        "rank",
        "bank",
        "row",
        "column",
        "detection",
        "multiplicity",
    )

    def _parse_row(self, row, lineno) -> CorrectedErrorEvent:
        try:
            detection = Detection(row["detection"])
        except ValueError:
            raise MalformedRowError(
                lineno, f"unknown detection token {row['detection']!r}"
            ) from None
        return CorrectedErrorEvent(
            timestamp=parse_time(row, "timestamp"),
            node=parse_id(row, "node"),
            dimm=parse_id(row, "dimm"),
            rank=parse_int(row, "rank", optional=True),
            bank=parse_int(row, "bank", optional=True),
            row=parse_int(row, "row", optional=True),
            column=parse_int(row, "column", optional=True),
            detection=detection,
            multiplicity=parse_int(row, "multiplicity"),
        )

    def _format_row(self, obj: CorrectedErrorEvent) -> list[str]:
        return [
            format_timestamp(obj.timestamp),
            obj.node,
            obj.dimm,
            format_optional(obj.rank),
            format_optional(obj.bank),
            format_optional(obj.row),
            format_optional(obj.column),
            obj.detection.token,
            str(obj.multiplicity),
        ]


class UeLogIO(BaseLogIO):
    """Reader/writer of uncorrected error logs, including UE warnings."""

    header = ("timestamp", "node", "dimm", "cause")

    def _parse_row(self, row, lineno) -> UncorrectedErrorEvent:
        try:
            cause = UeCause(row["cause"])
        except ValueError:
            raise MalformedRowError(
                lineno, f"unknown cause token {row['cause']!r}"
            ) from None
        return UncorrectedErrorEvent(
            timestamp=parse_time(row, "timestamp"),
            node=parse_id(row, "node"),
            dimm=parse_id(row, "dimm"),
            cause=cause,
        )

    def _format_row(self, obj: UncorrectedErrorEvent) -> list[str]:
        return [format_timestamp(obj.timestamp), obj.node, obj.dimm, obj.cause.value]


class ScrubLogIO(BaseLogIO):
    """Reader/writer of software scrubber logs of unprotected memory."""

    header = ("timestamp", "node", "address", "bits_flipped")

    def _parse_row(self, row, lineno) -> ScrubberErrorEvent:
        return ScrubberErrorEvent(
            timestamp=parse_time(row, "timestamp"),
            node=parse_id(row, "node"),
            address=parse_int(row, "address"),
            bits_flipped=parse_int(row, "bits_flipped"),
        )

    def _format_row(self, obj: ScrubberErrorEvent) -> list[str]:
        return [
            format_timestamp(obj.timestamp),
            obj.node,
            str(obj.address),
            str(obj.bits_flipped),
        ]
