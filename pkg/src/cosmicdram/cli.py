"""Command line interface.

Every command reads a dataset directory (``synth`` writes one), writes its
reports in the output directory together with a ``manifest.json`` and
returns 0 on success, 1 on invalid inputs and 2 when an internal invariant is
broken.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import pandas as pd
from monty.serialization import dumpfn, loadfn

from cosmicdram._version import __version__
from cosmicdram.core.base import CDObject
from cosmicdram.core.data_objects import ScopeKind, Severity
from cosmicdram.core.exceptions import CosmicDramException, InvariantViolationError
from cosmicdram.manager import StudyManager
from cosmicdram.ml.features import Target
from cosmicdram.synth import SynthConfig, generate, write_dataset
from cosmicdram.testbench import DEFAULT_ALPHA, outcomes_to_table, summarize
from cosmicdram.timegrid import Granularity
from cosmicdram.utils import file_digest, format_timestamp

logger = logging.getLogger(__name__)

THREADS_ENV = "COSMICDRAM_THREADS"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass
class RunManifest(CDObject):
    """Everything needed to replay a command. Holds no wall-clock time."""

    command: str
    version: str = __version__
    inputs: dict[str, str] = field(default_factory=dict)
    """SHA-256 digest of every input file."""

    seeds: list[int] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning("ignoring invalid %s=%r", THREADS_ENV, value)
        return 1


def _csv_list(choices: type | None = None):
    def parse(value: str):
        items = [v.strip() for v in value.split(",") if v.strip()]
        return [choices(v) for v in items] if choices else items

    return parse


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Write a CSV table preceded by a ``# columns:`` schema comment."""
    buffer = io.StringIO()
    buffer.write(f"# columns: {','.join(header)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buffer.getvalue())
    return path


def _write_text_table(path: Path, table: str) -> Path:
    header = table.split("\n", 1)[0]
    path.write_text(f"# columns: {header}\n{table}")
    return path


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if value != value else repr(value)
    return str(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosmicdram",
        description="Test whether cosmic-ray intensity influences DRAM error rates.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logs"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("dataset", type=Path, help="dataset directory")
    common.add_argument("--out", type=Path, default=Path("cosmicdram-output"))
    common.add_argument("--start", help="override of the observation interval start")
    common.add_argument("--end", help="override of the observation interval end")
    common.add_argument("--threads", type=int, default=None)

    windows = argparse.ArgumentParser(add_help=False)
    windows.add_argument("--exclude-partial", action="store_true", help="drop clipped windows")

    suite = argparse.ArgumentParser(add_help=False, parents=[windows])
    suite.add_argument("--class", dest="error_class", default="CE", choices=["CE", "UE", "MB"])
    suite.add_argument("--scopes", type=_csv_list(ScopeKind), default=None)
    suite.add_argument("--windows", type=_csv_list(Granularity), default=None)
    suite.add_argument("--drop-zero-windows", action="store_true")
    suite.add_argument("--dimm-scope", action="store_true", help="also test every DIMM")
    suite.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)

    commands.add_parser("validate", parents=[common], help="check the dataset consistency")

    timeline = commands.add_parser(
        "timeline", parents=[common, windows], help="neutron means and error counts per window"
    )
    timeline.add_argument("--granularity", type=Granularity, default=Granularity.DAY)

    commands.add_parser("correlate", parents=[common, suite], help="Kendall correlation suite")

    ks = commands.add_parser("ks", parents=[common, suite], help="Kolmogorov-Smirnov suite")
    ks.add_argument("--percentiles", type=_csv_list(float), default=[90.0, 95.0, 99.0, 99.9])

    hourly = commands.add_parser("hourly", parents=[common], help="hour-of-day profiles")
    hourly.add_argument("--class", dest="error_class", default="CE", choices=["CE", "UE", "MB"])
    hourly.add_argument("--utc-offset", type=float, default=0.0)
    hourly.add_argument("--exclude-top-dimms", type=float, default=0.0)

    heatmap = commands.add_parser(
        "heatmap", parents=[common, windows], help="windows binned by neutron mean and errors"
    )
    heatmap.add_argument("--class", dest="error_class", default="CE", choices=["CE", "UE", "MB"])
    heatmap.add_argument("--granularity", type=Granularity, default=Granularity.HOUR)
    heatmap.add_argument("--x-bins", type=int, default=20)
    heatmap.add_argument("--y-bins", type=int, default=20)
    heatmap.add_argument("--y-log", action="store_true")

    predict = commands.add_parser("predict", parents=[common], help="random forest prediction")
    predict.add_argument("--target", choices=["ue", "ce"], default="ue")
    predict.add_argument("--tick", default="1min", help="pandas timedelta, e.g. 1min or 1h")
    predict.add_argument("--seed", type=int, default=0)
    predict.add_argument("--grid", type=Path, default=None, help="YAML/JSON hyperparameter grid")
    predict.add_argument("--permute-neutron", action="store_true")

    monitors = commands.add_parser("monitors", parents=[common], help="compare two monitors")
    monitors.add_argument("--other", type=Path, required=True, help="second neutron log")
    monitors.add_argument("--granularity", type=Granularity, default=Granularity.DAY)

    synth = commands.add_parser("synth", help="generate a synthetic dataset")
    synth.add_argument("--config", type=Path, required=True)
    synth.add_argument("--out", type=Path, required=True)
    return parser


def _manager(args) -> StudyManager:
    return StudyManager(args.dataset, start=args.start, end=args.end)


def _config(args) -> dict[str, Any]:
    ignored = {"command", "verbose", "dataset", "out", "threads", "func"}
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in ignored:
            continue
        if isinstance(value, list):
            value = [v.value if hasattr(v, "value") else v for v in value]
        elif hasattr(value, "value"):
            value = value.value
        elif isinstance(value, Path):
            value = str(value)
        config[key] = value
    return config


def cmd_validate(args) -> tuple[int, list[Path]]:
    findings = _manager(args).validate()
    path = write_table(
        args.out / "findings.csv",
        ("severity", "kind", "message", "ref"),
        [(f.severity.value, f.kind, f.message, f.ref or "") for f in findings],
    )
    n_errors = sum(1 for f in findings if f.severity == Severity.ERROR)
    print(f"{len(findings)} findings, {n_errors} errors")
    return (1 if n_errors else 0), [path]


def cmd_timeline(args) -> tuple[int, list[Path]]:
    table = _manager(args).timeline(args.granularity, args.exclude_partial)
    table["window_start"] = table["window_start"].map(format_timestamp)
    table["window_end"] = table["window_end"].map(format_timestamp)
    rows = [[_cell(v) for v in row] for row in table.itertuples(index=False)]
    return 0, [write_table(args.out / "timeline.csv", list(table.columns), rows)]


def _run_suite(args, kind: str) -> tuple[int, list[Path]]:
    manager = _manager(args)
    options = dict(
        scope_kinds=args.scopes,
        windows=args.windows,
        include_dimms=args.dimm_scope,
        drop_zero_windows=args.drop_zero_windows,
        exclude_partial=args.exclude_partial,
        n_jobs=args.threads,
    )
    if kind == "ks":
        report, outcomes = manager.ks(args.error_class, percentiles=args.percentiles, **options)
    else:
        report, outcomes = manager.correlate(args.error_class, **options)
    summary = summarize(outcomes, alpha=args.alpha)
    table = _write_text_table(args.out / f"{kind}.csv", outcomes_to_table(outcomes))
    rejected = write_table(
        args.out / f"{kind}_rejected.csv",
        ("error_class", "window", "scope", "status"),
        [
            (r.spec.error_class.value, r.spec.window.value, str(r.spec.scope), r.status.value)
            for r in report.rejected
        ],
    )
    summary_path = args.out / f"{kind}_summary.json"
    dumpfn(
        {"feasibility": report.tally, "summary": summary}, summary_path, indent=1, sort_keys=True
    )
    print(
        f"{len(outcomes)} outcomes, {len(summary.significant)} significant at {args.alpha}, "
        f"{len(report.rejected)} specs rejected"
    )
    return 0, [table, rejected, summary_path]


def cmd_correlate(args) -> tuple[int, list[Path]]:
    return _run_suite(args, "kendall")


def cmd_ks(args) -> tuple[int, list[Path]]:
    return _run_suite(args, "ks")


def cmd_hourly(args) -> tuple[int, list[Path]]:
    profiles = _manager(args).hourly(args.error_class, args.utc_offset, args.exclude_top_dimms)
    rows = [
        (
            hour,
            _cell(float(profiles.errors_before[hour])),
            _cell(float(profiles.errors_after[hour])),
            _cell(float(profiles.neutron[hour])),
        )
        for hour in range(24)
    ]
    table = write_table(
        args.out / "hourly.csv", ("hour", "errors_before", "errors_after", "neutron_mean"), rows
    )
    details = args.out / "hourly.json"
    dumpfn(
        {
            "excluded": profiles.excluded,
            "uniformity_before": profiles.uniformity_before,
            "uniformity_after": profiles.uniformity_after,
        },
        details,
        indent=1,
        sort_keys=True,
    )
    return 0, [table, details]


def cmd_heatmap(args) -> tuple[int, list[Path]]:
    heatmap = _manager(args).heatmap(
        args.error_class,
        args.granularity,
        args.x_bins,
        args.y_bins,
        args.y_log,
        args.exclude_partial,
    )
    rows = []
    for i in range(len(heatmap.x_edges) - 1):
        for j in range(len(heatmap.y_edges) - 1):
            rows.append(
                (
                    _cell(float(heatmap.x_edges[i])),
                    _cell(float(heatmap.x_edges[i + 1])),
                    _cell(float(heatmap.y_edges[j])),
                    _cell(float(heatmap.y_edges[j + 1])),
                    int(heatmap.counts[i, j]),
                )
            )
    header = ("neutron_low", "neutron_high", "errors_low", "errors_high", "windows")
    return 0, [write_table(args.out / "heatmap.csv", header, rows)]


def cmd_predict(args) -> tuple[int, list[Path]]:
    target = Target.UE_NEXT_DAY if args.target == "ue" else Target.CE_NEXT_HOUR
    grid = loadfn(args.grid) if args.grid else None
    report, model = _manager(args).predict(
        target=target,
        tick=pd.Timedelta(args.tick).to_pytimedelta(),
        seed=args.seed,
        grid=grid,
        permute_neutron=args.permute_neutron,
        n_jobs=args.threads,
    )
    report_path = args.out / "report.json"
    dumpfn(report, report_path, indent=1, sort_keys=True)
    model_path = args.out / "model.json"
    model_path.write_text(model.to_text())
    print(f"AUC {report.auc:.4f}")
    return 0, [report_path, model_path]


def cmd_monitors(args) -> tuple[int, list[Path]]:
    comparison = _manager(args).monitors(args.other, args.granularity)
    rows = [
        (format_timestamp(w.start), _cell(float(a)), _cell(float(b)))
        for w, a, b in zip(comparison.windows, comparison.means_a, comparison.means_b)
    ]
    table = write_table(
        args.out / "monitors.csv", ("window_start", "monitor_a", "monitor_b"), rows
    )
    result_path = args.out / "monitors.json"
    dumpfn(comparison.result, result_path, indent=1, sort_keys=True)
    return 0, [table, result_path]


def cmd_synth(args) -> tuple[int, list[Path]]:
    config = SynthConfig.from_file(args.config)
    dataset, jobs = generate(config)
    written = write_dataset(dataset, args.out, jobs)
    return 0, sorted(written.values())


COMMANDS = {
    "validate": cmd_validate,
    "timeline": cmd_timeline,
    "correlate": cmd_correlate,
    "ks": cmd_ks,
    "hourly": cmd_hourly,
    "heatmap": cmd_heatmap,
    "predict": cmd_predict,
    "monitors": cmd_monitors,
    "synth": cmd_synth,
}


def write_manifest(args, outputs: list[Path]) -> Path:
    manifest = RunManifest(command=args.command, outputs=sorted(p.name for p in outputs))
    if args.command == "synth":
        config = SynthConfig.from_file(args.config)
        manifest.inputs = {args.config.name: file_digest(args.config)}
        manifest.seeds = [config.seed]
        manifest.config = config.as_dict()
    else:
        manifest.inputs = StudyManager(args.dataset).input_digests()
        for option in ("other", "grid"):
            path = getattr(args, option, None)
            if path is not None:
                manifest.inputs[f"{option}/{path.name}"] = file_digest(path)
        manifest.seeds = [args.seed] if hasattr(args, "seed") else []
        manifest.config = _config(args)
    path = args.out / "manifest.json"
    dumpfn(manifest, path, indent=1, sort_keys=True)
    return path


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    if getattr(args, "threads", None) is None and args.command != "synth":
        args.threads = default_threads()
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        code, outputs = COMMANDS[args.command](args)
        write_manifest(args, outputs)
    except InvariantViolationError as e:
        logger.error("internal invariant violated: %s", e)
        return 2
    except (CosmicDramException, FileNotFoundError, ValueError) as e:
        logger.error("%s", e)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
