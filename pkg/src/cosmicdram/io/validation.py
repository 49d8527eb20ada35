from __future__ import annotations

from collections.abc import Iterable

from cosmicdram.core.data_objects import (
    CorrectedErrorEvent,
    Finding,
    ObservationInterval,
    ScanExposureRecord,
    ScrubberErrorEvent,
    Severity,
    Topology,
    UncorrectedErrorEvent,
)
from cosmicdram.utils import format_timestamp

Event = CorrectedErrorEvent | UncorrectedErrorEvent | ScrubberErrorEvent


def _ref(event) -> str:
    parts = [format_timestamp(event.timestamp), event.node]
    if hasattr(event, "dimm"):
        parts.append(event.dimm)
    return ",".join(parts)


def validate_dataset(
    topology: Topology,
    events: Iterable[Event],
    interval: ObservationInterval | None = None,
    exposure: Iterable[ScanExposureRecord] = (),
) -> list[Finding]:
    """
    Check the consistency of the events with the inventory and the interval.

    Events referencing DIMMs or nodes absent from the inventory are reported
    as warnings: they are kept, but category filtered tests will skip them.
    When the inventory is empty while events exist, a single
    ``empty_inventory`` error replaces the per-event warnings. An event whose
    node differs from the node declared for its DIMM is an error. Events and
    exposure records outside the declared observation interval are reported as
    warnings. The inputs are never modified.

    Parameters
    ----------
    topology
        DIMM inventory.
    events
        Corrected, uncorrected and scrubber error events, in any mix.
    interval
        Declared observation interval, if any.
    exposure
        Scrubber exposure records.

    Returns
    -------
    list of Finding
    """
    findings = []
    events = list(events)
    known_nodes = set(topology.nodes)
    check_inventory = len(topology) > 0
    if events and not check_inventory:
        findings.append(
            Finding(
                Severity.ERROR,
                "empty_inventory",
                f"{len(events)} events but no DIMM in the inventory",
            )
        )
    for event in events:
        dimm_id = getattr(event, "dimm", None)
        if check_inventory and dimm_id is not None:
            record = topology.get(dimm_id)
            if record is None:
                findings.append(
                    Finding(
                        Severity.WARNING,
                        "unknown_dimm",
                        f"DIMM {dimm_id!r} is not in the inventory",
                        _ref(event),
                    )
                )
            elif record.node != event.node:
                findings.append(
                    Finding(
                        Severity.ERROR,
                        "node_mismatch",
                        f"DIMM {dimm_id!r} belongs to node {record.node!r}, "
                        f"event logged on node {event.node!r}",
                        _ref(event),
                    )
                )
        if check_inventory and event.node not in known_nodes:
            findings.append(
                Finding(
                    Severity.WARNING,
                    "unknown_node",
                    f"node {event.node!r} is not in the inventory",
                    _ref(event),
                )
            )
        if interval is not None and not interval.contains(event.timestamp):
            findings.append(
                Finding(
                    Severity.WARNING,
                    "outside_interval",
                    "event outside the observation interval",
                    _ref(event),
                )
            )
    if interval is not None:
        for record in exposure:
            if record.interval_end <= interval.start or record.interval_start >= interval.end:
                findings.append(
                    Finding(
                        Severity.WARNING,
                        "outside_interval",
                        "exposure record outside the observation interval",
                        f"{format_timestamp(record.interval_start)},{record.node}",
                    )
                )
    return findings
