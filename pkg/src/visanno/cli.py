"""Command-line interface.

Verbs: validate-hierarchy, ingest, serve, simulate, alpha, export.
All verbs exit 0 on success and 1 on a reported failure; parse errors print
a line-numbered message rather than a traceback.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

from .campaign import Campaign
from .engine import question_upper_bound
from .errors import VisannoError
from .hierarchy import parse_hierarchy
from .reliability import ReliabilityData, krippendorff_alpha_nominal
from .simulation import load_simulation_config, run_campaign, run_from_config
from .storage import EventLog, apply_localization, parse_detections, parse_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="visanno", description="Hierarchical image annotation toolkit")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate-hierarchy", help="check a hierarchy document and print a summary")
    p.add_argument("path", help="hierarchy JSON file")

    p = sub.add_parser("ingest", help="merge a manifest with detector output into image records")
    p.add_argument("--manifest", required=True, help="newline-delimited manifest file")
    p.add_argument("--detections", help="newline-delimited detector output file")
    p.add_argument("--min-confidence", type=float, default=0.5, help="drop boxes below this confidence")
    p.add_argument("--output", help="write records here instead of stdout")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", help="event-log directory (default: $VISANNO_DATA_DIR)")

    p = sub.add_parser("simulate", help="run simulated campaigns from a config file")
    p.add_argument("--config", required=True, help="simulation config JSON file")
    p.add_argument("--seed", type=int, help="override the config's seed")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--log-path", help="write the event log here (single protocol and size only)")

    p = sub.add_parser("alpha", help="compute Krippendorff's alpha from a reliability CSV")
    p.add_argument("path", help="CSV with header unit,observer,value")
    p.add_argument("--format", choices=("text", "csv"), default="text")

    p = sub.add_parser("export", help="replay an event log and print the dataset export")
    p.add_argument("--log-path", required=True, help="campaign event log (.ndjson)")
    p.add_argument("--output", help="write the export here instead of stdout")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except VisannoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace) -> int:
    if args.verb == "validate-hierarchy":
        return _cmd_validate_hierarchy(args)
    if args.verb == "ingest":
        return _cmd_ingest(args)
    if args.verb == "serve":
        return _cmd_serve(args)
    if args.verb == "simulate":
        return _cmd_simulate(args)
    if args.verb == "alpha":
        return _cmd_alpha(args)
    if args.verb == "export":
        return _cmd_export(args)
    raise AssertionError(f"unhandled verb {args.verb!r}")


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write_or_print(text: str, output: Optional[str]) -> None:
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_validate_hierarchy(args: argparse.Namespace) -> int:
    from .errors import HierarchyParseError, HierarchyValidationError

    try:
        hierarchy = parse_hierarchy(_read(args.path))
    except HierarchyParseError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    except HierarchyValidationError as exc:
        print(f"invalid: {len(exc.violations)} violation(s)", file=sys.stderr)
        for violation in exc.violations:
            print(f"  [{violation.code}] {violation.locus}: {violation.message}", file=sys.stderr)
        return 1
    nodes = sum(1 for _ in hierarchy)
    print(
        f"ok: {len(hierarchy.roots)} root(s), {nodes} node(s), "
        f"{len(hierarchy.leaves())} leaf(s), question upper bound {question_upper_bound(hierarchy)}"
    )
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    records = parse_manifest(_read(args.manifest))
    by_id = {record.image_id: record for record in records}
    crops = []
    if args.detections:
        for row in parse_detections(_read(args.detections)):
            original = by_id.get(row.image_id)
            if original is None:
                print(f"error: detections reference unknown image {row.image_id!r}", file=sys.stderr)
                return 1
            crops.extend(
                apply_localization(original, row.boxes, row.detector, min_confidence=args.min_confidence)
            )
    merged = records + crops
    text = "".join(json.dumps(record.payload(), sort_keys=True) + "\n" for record in merged)
    _write_or_print(text, args.output)
    print(
        f"ingested {len(records)} image(s), derived {len(crops)} crop(s)",
        file=sys.stderr,
    )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import run_service

    run_service(host=args.host, port=args.port, data_dir=args.data_dir)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    import os

    document = json.loads(_read(args.config))
    config = load_simulation_config(document, base_dir=os.path.dirname(args.config) or ".")
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    hierarchy = parse_hierarchy(_read(config.hierarchy_path))

    if args.log_path:
        if len(config.protocols) != 1 or len(config.sizes) != 1:
            print("error: --log-path needs a config with exactly one protocol and one size", file=sys.stderr)
            return 1
        from .simulation import generate_synthetic_corpus

        corpus, truth = generate_synthetic_corpus(
            hierarchy, config.n_per_leaf, config.out_of_scope_fraction, config.seed
        )
        protocol = config.protocols[0]
        result = run_campaign(
            hierarchy,
            corpus,
            truth,
            config.models_by_protocol[protocol],
            protocol,
            task_size=config.sizes[0],
            seed=config.seed,
            replication=config.replication,
            escalation_cap=config.escalation_cap,
            rates=config.rates,
            log_path=args.log_path,
        )
        row = result.row
        alpha = "n/a" if row.alpha is None else f"{row.alpha:.6f}"
        print(
            f"{row.protocol.value} size={row.task_size}: images={row.images} tasks={row.tasks} "
            f"alpha={alpha} accuracy={row.accuracy:.3f} escalated={row.escalated} "
            f"unresolved={row.unresolved}"
        )
        print(f"event log written to {args.log_path}", file=sys.stderr)
        return 0

    report = run_from_config(config, hierarchy)
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        print(report.to_text())
    return 0


def _cmd_alpha(args: argparse.Namespace) -> int:
    from .errors import DegenerateDataError, InsufficientDataError

    rows = []
    with open(args.path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and [cell.strip().lower() for cell in row] == ["unit", "observer", "value"]:
                continue
            if len(row) != 3:
                print(f"error: line {lineno}: expected unit,observer,value", file=sys.stderr)
                return 1
            unit, observer, value = (cell.strip() for cell in row)
            if value:
                rows.append((unit, observer, value))
    try:
        alpha = krippendorff_alpha_nominal(ReliabilityData.from_rows(rows))
    except InsufficientDataError as exc:
        print(f"alpha unavailable: {exc}", file=sys.stderr)
        return 1
    except DegenerateDataError as exc:
        print(f"alpha unavailable: {exc}", file=sys.stderr)
        return 1
    if args.format == "csv":
        print("alpha")
        print(repr(alpha))
    else:
        print(alpha)
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    log = EventLog.open(args.log_path)
    try:
        if len(log) == 0:
            print(f"error: {args.log_path} holds no events", file=sys.stderr)
            return 1
        campaign = Campaign.from_log(log)
        text = campaign.export()
    finally:
        log.close()
    _write_or_print(text, args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
