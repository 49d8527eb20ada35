"""Derived labels of the error events.

Transience and cell multiplicity depend on the whole history of a DIMM, so
the labelling functions take the complete event list rather than a stream.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from collections.abc import Sequence
from dataclasses import dataclass

from cosmicdram.core.base import CDEnum, CDObject
from cosmicdram.core.data_objects import (
    CorrectedErrorEvent,
    Detection,
    Manufacturer,
    ScrubberErrorEvent,
    Technology,
    Topology,
)


class BitClass(CDEnum):
    """Number of corrupted bits of a scrubber error, saturating at 6."""

    ONE = "1"
    TWO = "2"
    THREE = "3"
    FOUR = "4"
    FIVE = "5"
    SIX_PLUS = "6+"


@dataclass(frozen=True)
class CeCategory(CDObject):
    manufacturer: Manufacturer
    technology: Technology
    detection: Detection
    transient: bool | None
    """None when the event location is unknown."""

    single_cell: bool | None
    """None when the event location is unknown."""


@dataclass(frozen=True)
class CeLabels(CDObject):
    transient: bool | None
    single_cell: bool | None
    category: CeCategory


def label_transience(events: Sequence[CorrectedErrorEvent]) -> list[bool | None]:
    """
    Flag the transient corrected errors.

    An event is transient if, over the whole observation period and within
    its (DIMM, rank, bank), its cell is hit only once and no other event hits
    the same row or the same column. Events without full location get None:
    they are never transient and never disqualify other events.

    Parameters
    ----------
    events
        Corrected error events, of one or several DIMMs.

    Returns
    -------
    list
        Flags aligned with ``events``.
    """
    flags: list[bool | None] = [None] * len(events)
    banks = defaultdict(list)
    for i, event in enumerate(events):
        if event.located:
            banks[(event.dimm, event.rank, event.bank)].append(i)
    for indices in banks.values():
        cells = Counter((events[i].row, events[i].column) for i in indices)
        rows = Counter(events[i].row for i in indices)
        columns = Counter(events[i].column for i in indices)
        for i in indices:
            event = events[i]
            flags[i] = (
                cells[(event.row, event.column)] == 1
                and rows[event.row] == 1
                and columns[event.column] == 1
            )
    return flags


def label_cell_multiplicity(events: Sequence[CorrectedErrorEvent]) -> list[bool | None]:
    """
    Flag the events whose exact cell appears only once in the DIMM history.

    Events without full location get None and only match "All" filters.
    """
    cells = Counter((e.dimm, e.cell) for e in events if e.located)
    return [cells[(e.dimm, e.cell)] == 1 if e.located else None for e in events]


def derive_category(
    event: CorrectedErrorEvent,
    topology: Topology,
    transient: bool | None = None,
    single_cell: bool | None = None,
) -> CeCategory:
    """Join an event to its DIMM record. Unknown DIMMs get unknown attributes."""
    record = topology.get(event.dimm)
    if record is None:
        manufacturer, technology = Manufacturer.UNKNOWN, Technology.UNKNOWN
    else:
        manufacturer, technology = record.manufacturer, record.technology
    return CeCategory(
        manufacturer=manufacturer,
        technology=technology,
        detection=event.detection,
        transient=transient,
        single_cell=single_cell,
    )


def label_events(
    events: Sequence[CorrectedErrorEvent], topology: Topology
) -> list[CeLabels]:
    transient = label_transience(events)
    single_cell = label_cell_multiplicity(events)
    return [
        CeLabels(t, s, derive_category(e, topology, t, s))
        for e, t, s in zip(events, transient, single_cell)
    ]


def classify_bit_width(event: ScrubberErrorEvent | int) -> BitClass:
    bits = event if isinstance(event, int) else event.bits_flipped
    if bits < 1:
        raise ValueError(f"bits_flipped must be >= 1, got {bits}")
    if bits >= 6:
        return BitClass.SIX_PLUS
    return BitClass(str(bits))
