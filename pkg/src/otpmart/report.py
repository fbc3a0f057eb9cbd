"""Grouped metric reports: percent-of-total tables and SVG pie/bar charts.

Values keep full precision until rendering. Percentages are rounded half-up
to three decimals; chart geometry uses the unrounded shares. Undefined
values are listed but take no part in percent-of-total or charts.

Charts use a fixed palette, cycled in row order:
``#4e79a7 #f28e2b #e15759 #76b7b2 #59a14f #edc948 #b07aa1 #ff9da7``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Mapping
from xml.sax.saxutils import escape, quoteattr

from . import kpi
from . import mart_schema as ms

PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7")
CHART_KINDS = ("pie", "bar")
BLOCK_AXIS = "block"
_THOUSANDTH = Decimal("0.001")


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ReportRow:
    label: str
    value: float | kpi.Undefined
    percent: float | None = None  # percent of total, already rounded to 3 decimals


@dataclass(frozen=True)
class Report:
    title: str
    metric_id: str
    unit: str
    period: str
    rows: tuple[ReportRow, ...] = ()


def _round_percent(share: Fraction) -> float:
    with localcontext() as ctx:
        ctx.prec = 40
        exact = Decimal(share.numerator) / Decimal(share.denominator)
        return float(exact.quantize(_THOUSANDTH, rounding=ROUND_HALF_UP))


def _shares(values: Mapping[str, float | kpi.Undefined]) -> dict[str, Fraction]:
    defined = {k: Fraction(v) for k, v in values.items() if v is not kpi.UNDEFINED}
    if any(v < 0 for v in defined.values()):
        raise ReportError("percent of total needs non-negative values")
    total = sum(defined.values())
    if total == 0:
        raise ReportError("percent of total needs at least one positive value")
    return {k: v / total for k, v in defined.items()}


def percent_of_total(values: Mapping[str, float | kpi.Undefined]) -> tuple[ReportRow, ...]:
    """One row per label, in input order, with 100 * value / total rounded half-up."""
    shares = _shares(values)
    return tuple(
        ReportRow(label, value, None if value is kpi.UNDEFINED else _round_percent(100 * shares[label]))
        for label, value in values.items()
    )


def build_report(
    mart: ms.MartSnapshot,
    metric_id: str,
    period: kpi.ReportingPeriod,
    group_by: str,
    filters: Mapping[str, str] | None = None,
    block: int | None = None,
) -> Report:
    """Evaluate a metric per group and attach percent-of-total.

    For the per-block metric, ``group_by="block"`` puts the five blocks on
    the rows; any other grouping needs ``block`` to pick one of them.
    Raises ReportError when no group has a defined value.
    """
    mdef = kpi.get_metric(metric_id)
    if mdef.blocks:
        if group_by == BLOCK_AXIS:
            blocks = kpi.as_values(kpi.evaluate(mart, metric_id, period, filters))
            values = {f"mp{v.block}": v.value for v in blocks}
        else:
            if block not in mdef.blocks:
                raise ReportError(f"{metric_id} needs a block in {list(mdef.blocks)} or group_by='block'")
            grouped = kpi.evaluate_grouped(mart, metric_id, period, group_by, filters)
            values = {label: res[block - 1].value for label, res in grouped.items()}
    else:
        if block is not None:
            raise ReportError(f"{metric_id} has no blocks")
        grouped = kpi.evaluate_grouped(mart, metric_id, period, group_by, filters)
        values = {label: res.value for label, res in grouped.items()}
    if not any(v is not kpi.UNDEFINED for v in values.values()):
        raise ReportError(f"{metric_id} has no defined value in {period.label} for any {group_by}")
    try:
        rows = percent_of_total(values)
    except ReportError:
        # every defined value is zero: nothing to share out
        rows = tuple(ReportRow(k, v) for k, v in values.items())
    title = f"{mdef.name} by {group_by}, {period.label}"
    if block is not None:
        title += f", block {block}"
    return Report(title, metric_id, mdef.unit, period.label, rows)


def format_number(value: float) -> str:
    """Shortest fixed-point form with at most six decimals: 3.5, 5, 0.333333."""
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def _value_text(value: float | kpi.Undefined) -> str:
    return str(kpi.UNDEFINED) if value is kpi.UNDEFINED else format_number(value)


def render_csv(report: Report) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["label", "value", "percent"])
    for row in report.rows:
        writer.writerow([row.label, _value_text(row.value), "" if row.percent is None else f"{row.percent:.3f}"])
    return out.getvalue()


def render_json(report: Report) -> str:
    doc = {
        "title": report.title,
        "metricId": report.metric_id,
        "unit": report.unit,
        "period": report.period,
        "rows": [
            {
                "label": r.label,
                "value": str(kpi.UNDEFINED) if r.value is kpi.UNDEFINED else r.value,
                "percent": r.percent,
            }
            for r in report.rows
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def report_from_json(text: str) -> Report:
    doc = json.loads(text)
    rows = tuple(
        ReportRow(
            r["label"],
            kpi.UNDEFINED if r["value"] == str(kpi.UNDEFINED) else r["value"],
            r["percent"],
        )
        for r in doc["rows"]
    )
    return Report(doc["title"], doc["metricId"], doc["unit"], doc["period"], rows)


def _svg(width: int, height: int, title: str, body: list[str]) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f"<title>{escape(title)}</title>",
        f'<text x="{width / 2:g}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _defined(report: Report) -> list[ReportRow]:
    rows = [r for r in report.rows if r.value is not kpi.UNDEFINED]
    if not rows or all(r.value == 0 for r in rows):
        raise ReportError("chart needs at least one positive value")
    if any(r.value < 0 for r in rows):
        raise ReportError("chart needs non-negative values")
    return rows


def _pie(report: Report) -> str:
    rows = _defined(report)
    shares = _shares({r.label: r.value for r in rows})
    cx, cy, radius = 200, 200, 150
    body = []
    start = Fraction(0)
    for i, row in enumerate(rows):
        sweep = 360 * shares[row.label]
        color = PALETTE[i % len(PALETTE)]
        attrs = (
            f'data-label={quoteattr(row.label)} data-value="{format_number(row.value)}" '
            f'data-angle="{float(sweep):.6f}" fill="{color}"'
        )
        if sweep == 360:
            body.append(f'<circle cx="{cx}" cy="{cy}" r="{radius}" {attrs}/>')
        elif sweep > 0:
            a0, a1 = math.radians(float(start) - 90), math.radians(float(start + sweep) - 90)
            x0, y0 = cx + radius * math.cos(a0), cy + radius * math.sin(a0)
            x1, y1 = cx + radius * math.cos(a1), cy + radius * math.sin(a1)
            large = 1 if sweep > 180 else 0
            body.append(
                f'<path d="M {cx} {cy} L {x0:.3f} {y0:.3f} A {radius} {radius} 0 {large} 1 {x1:.3f} {y1:.3f} Z" '
                f"{attrs}/>"
            )
        percent = "" if row.percent is None else f" ({row.percent:.3f}%)"
        body.append(
            f'<rect x="380" y="{60 + 20 * i}" width="12" height="12" fill="{color}"/>'
            f'<text x="398" y="{71 + 20 * i}">{escape(row.label)}{escape(percent)}</text>'
        )
        start += sweep
    return _svg(600, 400, report.title, body)


def _bar(report: Report) -> str:
    rows = _defined(report)
    top = max(r.value for r in rows)
    plot_h, base_y, slot = 300.0, 350, 60
    body = [f'<line x1="40" y1="{base_y}" x2="{40 + slot * len(rows)}" y2="{base_y}" stroke="#333"/>']
    for i, row in enumerate(rows):
        h = plot_h * row.value / top
        x = 50 + slot * i
        body.append(
            f'<rect x="{x}" y="{base_y - h:.3f}" width="40" height="{h:.3f}" '
            f'fill="{PALETTE[i % len(PALETTE)]}" data-label={quoteattr(row.label)} '
            f'data-value="{format_number(row.value)}"/>'
        )
        body.append(f'<text x="{x + 20}" y="{base_y + 16}" text-anchor="middle">{escape(row.label)}</text>')
        body.append(
            f'<text x="{x + 20}" y="{base_y - h - 4:.3f}" text-anchor="middle">{format_number(row.value)}</text>'
        )
    return _svg(max(200, 60 + slot * len(rows)), 400, f"{report.title} ({report.unit})", body)


def render_chart(report: Report, kind: str) -> str:
    """Self-contained SVG. Pie slices carry their sweep in ``data-angle`` degrees."""
    if kind == "pie":
        return _pie(report)
    if kind == "bar":
        return _bar(report)
    raise ReportError(f"invalid chart kind {kind!r}; expected one of {list(CHART_KINDS)}")


def render_bar_series(title: str, unit: str, series: Mapping[str, Mapping[str, float]]) -> str:
    """Grouped bars: one colour per series, one cluster per x value (e.g. month)."""
    xs = sorted({x for points in series.values() for x in points})
    values = [v for points in series.values() for v in points.values()]
    if not values or max(values) <= 0:
        raise ReportError("chart needs at least one positive value")
    top = max(values)
    names = list(series)
    bar_w, gap, plot_h, base_y = 14, 16, 300.0, 350
    cluster = bar_w * len(names) + gap
    body = [f'<line x1="40" y1="{base_y}" x2="{50 + cluster * len(xs)}" y2="{base_y}" stroke="#333"/>']
    for j, x_label in enumerate(xs):
        x0 = 50 + cluster * j
        for i, name in enumerate(names):
            v = series[name].get(x_label)
            if v is None:
                continue
            h = plot_h * v / top
            body.append(
                f'<rect x="{x0 + bar_w * i}" y="{base_y - h:.3f}" width="{bar_w}" height="{h:.3f}" '
                f'fill="{PALETTE[i % len(PALETTE)]}" data-series={quoteattr(name)} '
                f'data-x={quoteattr(x_label)} data-value="{format_number(v)}"/>'
            )
        body.append(
            f'<text x="{x0 + bar_w * len(names) / 2:g}" y="{base_y + 16}" text-anchor="middle">'
            f"{escape(x_label)}</text>"
        )
    width = max(300, 80 + cluster * len(xs) + 140)
    for i, name in enumerate(names):
        lx = width - 130
        body.append(
            f'<rect x="{lx}" y="{60 + 20 * i}" width="12" height="12" fill="{PALETTE[i % len(PALETTE)]}"/>'
            f'<text x="{lx + 18}" y="{71 + 20 * i}">{escape(name)}</text>'
        )
    return _svg(width, 400, f"{title} ({unit})", body)


def write_report(report: Report, directory: str | Path, name: str, chart: str | None) -> list[Path]:
    """Write <name>.csv, <name>.json and, if a chart kind is given, <name>.svg."""
    if chart is not None and chart not in CHART_KINDS:
        raise ReportError(f"invalid chart kind {chart!r}; expected one of {list(CHART_KINDS)}")
    texts = {".csv": render_csv(report), ".json": render_json(report)}
    if chart is not None:
        texts[".svg"] = render_chart(report, chart)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for suffix, text in texts.items():
        path = directory / f"{name}{suffix}"
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths
