"""Command line entry point: ``otpmart generate|etl|kpi|query|report``.

Exit codes: 0 success, 1 bad flags or a domain/validation error, 2 an IO
or config-file error. Results go to stdout as JSON or CSV; diagnostics go
to stderr.

Every subcommand takes ``--config FILE``, a ``key=value`` file whose keys
are the long flag names (``group-by`` or ``group_by``); flags given on the
command line win. For ``generate`` the file may also set any generator
parameter (``failure_rate``, ``period_start``, ...).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from . import datagen, etl, kpi, olap, report
from . import mart_schema as ms
from . import source_model as sm

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    """Bad flags or a domain error; exit code 1."""


class MissingOption(UsageError):
    """A required option was given neither as a flag nor in --config."""


class IOProblem(Exception):
    """Unreadable input, unwritable output or a bad config file; exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value file with defaults for these flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otpmart", description="Order-to-Payment customer experience data mart")
    parser.add_argument("--version", action="version", version=f"otpmart {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subparsers = {}

    g = subparsers["generate"] = sub.add_parser("generate", help="write a synthetic source dataset")
    _add_common(g)
    g.add_argument("--seed", type=int)
    g.add_argument("--orders", type=int, help="number of fulfilment chains")
    g.add_argument("--out", type=Path, help="output directory for the source CSV files")

    e = subparsers["etl"] = sub.add_parser("etl", help="validate source files and build the mart")
    _add_common(e)
    e.add_argument("--source", type=Path)
    e.add_argument("--mart", type=Path)
    e.add_argument("--parallel", action="store_true", default=None, help="build fact tables concurrently")

    k = subparsers["kpi"] = sub.add_parser("kpi", help="evaluate a metric")
    _add_common(k)
    k.add_argument("--mart", type=Path)
    k.add_argument("--metric", help="metric id, or 'all'")
    k.add_argument("--period", help="YYYY, YYYY-MM or YYYY-MM-DD..YYYY-MM-DD (end exclusive)")
    k.add_argument("--filter", action="append", metavar="ATTR=VALUE")
    k.add_argument("--group-by")

    q = subparsers["query"] = sub.add_parser("query", help="run a dimensional query and print the grid as CSV")
    _add_common(q)
    q.add_argument("--mart", type=Path)
    q.add_argument("--q", help="e.g. fact=fact_fce2abc;measure=mean(orderDurationDays);by=partyRoleName")

    r = subparsers["report"] = sub.add_parser("report", help="write a grouped metric report as CSV, JSON and SVG")
    _add_common(r)
    r.add_argument("--mart", type=Path)
    r.add_argument("--metric")
    r.add_argument("--period")
    r.add_argument("--group-by")
    r.add_argument("--filter", action="append", metavar="ATTR=VALUE")
    r.add_argument("--block", type=int, help="meta-process block for the per-block metric")
    r.add_argument("--chart", help="pie or bar")
    r.add_argument("--out", type=Path)
    r.add_argument("--name", help="output file stem (default: metric and period)")
    for p in subparsers.values():
        p.set_defaults(usage=p.format_usage())
    return parser


_CONFIG_TYPES = {"seed": int, "orders": int, "block": int, "out": Path, "source": Path, "mart": Path}


def _merge_config(args: argparse.Namespace) -> dict[str, str]:
    """Fill unset flags from --config; returns the keys left over for the subcommand."""
    if args.config is None:
        return {}
    try:
        values = datagen.read_key_values(args.config)
    except OSError as exc:
        raise IOProblem(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    except datagen.ConfigError as exc:
        raise IOProblem(str(exc)) from None
    rest = {}
    for key, text in values.items():
        dest = key.replace("-", "_")
        if dest in ("config", "command", "verbose", "usage") or not hasattr(args, dest):
            rest[key] = text
            continue
        if getattr(args, dest) is not None:
            continue
        if dest == "filter":
            setattr(args, dest, [p for p in text.split(",") if p.strip()])
        elif dest == "parallel":
            setattr(args, dest, text.lower() in ("1", "true", "yes"))
        else:
            try:
                setattr(args, dest, _CONFIG_TYPES.get(dest, str)(text))
            except ValueError:
                raise IOProblem(f"{args.config}: bad value for {key}: {text!r}") from None
    return rest


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise MissingOption(f"missing required option(s): {', '.join(missing)}")


def _print_json(doc: Any) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _parse_filters(items: Sequence[str] | None) -> dict[str, str]:
    filters = {}
    for item in items or ():
        attr, sep, value = item.partition("=")
        if not sep or not attr:
            raise UsageError(f"bad filter {item!r}; expected ATTR=VALUE")
        filters[attr.strip()] = value.strip()
    return filters


def _period(text: str) -> kpi.ReportingPeriod:
    try:
        return kpi.ReportingPeriod.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_mart(path: Path) -> ms.MartSnapshot:
    if not path.is_dir():
        raise IOProblem(f"mart directory not found: {path}")
    try:
        return ms.read_mart(path)
    except FileNotFoundError as exc:
        raise IOProblem(f"missing mart file: {exc.filename}") from None
    except OSError as exc:
        raise IOProblem(f"cannot read mart: {exc}") from None
    except ms.MartError as exc:
        raise UsageError(f"malformed mart in {path}:\n{exc}") from None


def cmd_generate(args: argparse.Namespace, rest: dict[str, str]) -> int:
    try:
        config = datagen.GenConfig.from_mapping(rest)
    except datagen.ConfigError as exc:
        raise IOProblem(f"{args.config}: {exc}") from None
    _require(args, "out")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.orders is not None:
        overrides["order_count"] = args.orders
    try:
        config = dataclasses.replace(config, **overrides)
    except datagen.ConfigError as exc:
        raise UsageError(str(exc)) from None
    dataset = datagen.generate(config)
    try:
        manifest = datagen.write_source(dataset, args.out)
    except OSError as exc:
        raise IOProblem(f"cannot write {args.out}: {exc.strerror or exc}") from None
    _print_json({"out": str(args.out), "seed": config.seed, "orders": config.order_count, "files": manifest})
    return EXIT_OK


def cmd_etl(args: argparse.Namespace, rest: dict[str, str]) -> int:
    _reject_rest(rest, args)
    _require(args, "source", "mart")
    try:
        config = etl.PipelineConfig(args.source, args.mart, bool(args.parallel))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not args.source.is_dir():
        raise IOProblem(f"source directory not found: {args.source}")
    try:
        _, summary = etl.run_pipeline(config)
    except etl.ValidationFailed as exc:
        for v in exc.report:
            print(f"{v.rule}: {v.entity} {v.id}: {v.detail}", file=sys.stderr)
        print(f"etl: {exc}; nothing written", file=sys.stderr)
        return EXIT_USAGE
    except sm.SourceFormatError as exc:
        print("\n".join(exc.problems), file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        raise IOProblem(f"missing source file: {exc.filename}") from None
    except OSError as exc:
        raise IOProblem(f"etl failed: {exc}") from None
    sys.stdout.write(summary.render())
    return EXIT_OK


def _metric_ids(metric: str) -> list[str]:
    if metric == "all":
        return [m.metric_id for m in kpi.list_metrics()]
    try:
        return [kpi.get_metric(metric).metric_id]
    except kpi.UnknownMetric as exc:
        raise UsageError(str(exc)) from None


def _result_json(result: kpi.MetricResult) -> Any:
    if isinstance(result, tuple):
        return [v.to_json() for v in result]
    return result.to_json()


def cmd_kpi(args: argparse.Namespace, rest: dict[str, str]) -> int:
    _reject_rest(rest, args)
    _require(args, "mart", "metric", "period")
    period = _period(args.period)
    filters = _parse_filters(args.filter)
    ids = _metric_ids(args.metric)
    try:
        for metric_id in ids:
            mdef = kpi.get_metric(metric_id)
            kpi.check_filters(mdef, filters)
            if args.group_by is not None:
                kpi.check_group_by(mdef, args.group_by)
    except kpi.DisallowedFilter as exc:
        raise UsageError(str(exc)) from None
    mart = _load_mart(args.mart)
    out = {}
    for metric_id in ids:
        if args.group_by is None:
            out[metric_id] = _result_json(kpi.evaluate(mart, metric_id, period, filters))
        else:
            grouped = kpi.evaluate_grouped(mart, metric_id, period, args.group_by, filters)
            out[metric_id] = {
                "metric": metric_id,
                "period": period.label,
                "groupBy": args.group_by,
                "groups": {label: _result_json(res) for label, res in grouped.items()},
            }
    _print_json(out if args.metric == "all" else out[ids[0]])
    return EXIT_OK


def cmd_query(args: argparse.Namespace, rest: dict[str, str]) -> int:
    _reject_rest(rest, args)
    _require(args, "mart", "q")
    try:
        query = olap.parse_query(args.q)
    except olap.QueryError as exc:
        raise UsageError(str(exc)) from None
    grid = olap.run_query(_load_mart(args.mart), query)
    sys.stdout.write(olap.render_grid_csv(grid))
    return EXIT_OK


def cmd_report(args: argparse.Namespace, rest: dict[str, str]) -> int:
    _reject_rest(rest, args)
    _require(args, "mart", "metric", "period", "group_by", "out")
    if args.chart is not None and args.chart not in report.CHART_KINDS:
        raise UsageError(f"invalid chart kind {args.chart!r}; expected one of {list(report.CHART_KINDS)}")
    period = _period(args.period)
    filters = _parse_filters(args.filter)
    if args.metric == "all":
        raise UsageError("report takes a single metric")
    (metric_id,) = _metric_ids(args.metric)
    mdef = kpi.get_metric(metric_id)
    try:
        kpi.check_filters(mdef, filters)
        if not (mdef.blocks and args.group_by == report.BLOCK_AXIS):
            kpi.check_group_by(mdef, args.group_by)
    except kpi.DisallowedFilter as exc:
        raise UsageError(str(exc)) from None
    mart = _load_mart(args.mart)
    try:
        rep = report.build_report(mart, metric_id, period, args.group_by, filters, args.block)
        text = {".csv": report.render_csv(rep), ".json": report.render_json(rep)}
        if args.chart is not None:
            text[".svg"] = report.render_chart(rep, args.chart)
    except report.ReportError as exc:
        raise UsageError(str(exc)) from None
    name = args.name or f"{metric_id}_{period.label}".replace("..", "_")
    written = []
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        for suffix, body in text.items():
            path = args.out / f"{name}{suffix}"
            path.write_text(body, encoding="utf-8")
            written.append(str(path))
    except OSError as exc:
        raise IOProblem(f"cannot write report: {exc.strerror or exc}") from None
    _print_json({"report": rep.title, "files": written})
    return EXIT_OK


def _reject_rest(rest: dict[str, str], args: argparse.Namespace) -> None:
    if rest:
        raise IOProblem(f"{args.config}: unknown key(s) {sorted(rest)} for {args.command}")


COMMANDS = {
    "generate": cmd_generate,
    "etl": cmd_etl,
    "kpi": cmd_kpi,
    "query": cmd_query,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        rest = _merge_config(args)
        return COMMANDS[args.command](args, rest)
    except UsageError as exc:
        if isinstance(exc, MissingOption):
            sys.stderr.write(args.usage)
        print(f"otpmart {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IOProblem as exc:
        print(f"otpmart {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
