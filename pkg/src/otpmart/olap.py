"""Slice, dice and roll up mart facts along dimension attributes and time.

A query names one fact table, one or more aggregated measures and the axes
to group by. Axes are dimension attributes (``partyRoleName``) or one time
level (``year``, ``month`` or ``day``) applied to one of the fact's time
keys. Day measures are summed as exact fractions of a day, so rolling a
month grid up to a year reproduces the year grid exactly.

Textual form, as taken by the command line::

    fact=fact_fce2abc;measure=mean(orderDurationDays);by=partyRoleName,month;filter=partyRoleName=consumer;level=month
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Iterable

from . import mart_schema as ms
from .tables import SECONDS_PER_DAY

AGGREGATORS = ("sum", "count", "mean")
ROW_COUNT = "*"


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class Measure:
    aggregator: str
    column: str  # fact column header, or "*" for count(*)

    @property
    def label(self) -> str:
        return f"{self.aggregator}({self.column})"


@dataclass(frozen=True)
class Query:
    fact: str
    measures: tuple[Measure, ...]
    by: tuple[str, ...] = ()
    filters: tuple[tuple[str, str], ...] = ()
    level: str | None = None
    time_key: str | None = None  # fact column header; defaults to the fact's first time key

    def __post_init__(self) -> None:
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "by", tuple(self.by))
        object.__setattr__(self, "filters", tuple(self.filters))
        validate_query(self)

    @property
    def time_axis(self) -> str | None:
        axes = [a for a in self.by if a in ms.TIME_LEVELS]
        return axes[0] if axes else None


def _fact(name: str) -> ms.FactSpec:
    try:
        return ms.FACTS[name]
    except KeyError:
        raise QueryError(f"unknown fact {name!r}; known: {sorted(ms.FACTS)}") from None


def _time_attr(fact: ms.FactSpec, header: str | None) -> str:
    if header is None:
        return fact.time_keys[0]
    try:
        attr = fact.table.column(header).attr
    except KeyError:
        attr = None
    if attr not in fact.time_keys:
        headers = [c.header for c in fact.table.columns if c.attr in fact.time_keys]
        raise QueryError(f"{fact.name} has no time key {header!r}; known: {headers}")
    return attr


def _fk_for(fact: ms.FactSpec, attribute: str) -> str:
    if attribute not in ms.ATTRIBUTES:
        raise QueryError(f"unknown attribute {attribute!r}")
    fk = ms.dimension_fk(fact.name, ms.ATTRIBUTES[attribute][0])
    if fk is None:
        raise QueryError(f"attribute {attribute!r} is not reachable from {fact.name}")
    return fk


def validate_query(query: Query) -> None:
    fact = _fact(query.fact)
    if not query.measures:
        raise QueryError("a query needs at least one measure")
    for m in query.measures:
        if m.aggregator not in AGGREGATORS:
            raise QueryError(f"invalid aggregator {m.aggregator!r}; expected one of {list(AGGREGATORS)}")
        if m.column == ROW_COUNT:
            if m.aggregator != "count":
                raise QueryError(f"{m.label}: '*' only works with count")
        elif m.column not in fact.measures:
            raise QueryError(f"{fact.name} has no measure {m.column!r}; known: {list(fact.measures)}")
    if len(set(query.by)) != len(query.by):
        raise QueryError("duplicate axis in by")
    times = [a for a in query.by if a in ms.TIME_LEVELS]
    if len(times) > 1:
        raise QueryError("at most one time axis per query")
    for axis in query.by:
        if axis not in ms.TIME_LEVELS:
            _fk_for(fact, axis)
    for attr, _ in query.filters:
        if attr not in ms.TIME_LEVELS:
            _fk_for(fact, attr)
    if query.level is not None:
        if query.level not in ms.TIME_LEVELS:
            raise QueryError(f"invalid level {query.level!r}; expected one of {list(ms.TIME_LEVELS)}")
        if times and times[0] != query.level:
            raise QueryError(f"level {query.level!r} disagrees with time axis {times[0]!r}")
        if not times:
            raise QueryError("level given without a time axis in by")
    _time_attr(fact, query.time_key)


@dataclass(frozen=True)
class ResultGrid:
    """Axis tuples mapped to measure values, rows in lexicographic axis order."""

    axes: tuple[str, ...]
    measures: tuple[Measure, ...]
    rows: tuple[tuple[tuple[str, ...], tuple[Any, ...]], ...] = field(default=())

    def as_dict(self) -> dict[tuple[str, ...], tuple[Any, ...]]:
        return dict(self.rows)

    def column(self, label: str) -> dict[tuple[str, ...], Any]:
        idx = [m.label for m in self.measures].index(label)
        return {k: v[idx] for k, v in self.rows}


def _measure_reader(fact: ms.FactSpec, column: str):
    if column == ROW_COUNT:
        return lambda row: 1
    col = fact.table.column(column)
    attr = col.attr
    if col.kind == "days":
        return lambda row: None if getattr(row, attr) is None else Fraction(getattr(row, attr), SECONDS_PER_DAY)
    return lambda row: getattr(row, attr)


def run_query(mart: ms.MartSnapshot, query: Query) -> ResultGrid:
    """Group the fact's rows along the query axes and aggregate each measure.

    Absent measure values are skipped by every aggregator. A group whose mean
    has nothing to average is left out of the grid. When the query has a
    time axis or a time filter, rows without a date on the chosen time key
    are left out.
    """
    fact = _fact(query.fact)
    time_attr = _time_attr(fact, query.time_key)
    dated = query.time_axis is not None or any(a in ms.TIME_LEVELS for a, _ in query.filters)

    def getter(name: str):
        if name in ms.TIME_LEVELS:
            return lambda row: ms.time_label(getattr(row, time_attr), name)
        fk, lookup = _fk_for(fact, name), mart.attribute_lookup(name)
        return lambda row: lookup.get(getattr(row, fk), ms.UNKNOWN_LABEL)

    tests = [(getter(a), str(v)) for a, v in query.filters]
    axes = [getter(a) for a in query.by]
    readers = [_measure_reader(fact, m.column) for m in query.measures]

    # group -> per measure [sum, count]
    groups: dict[tuple[str, ...], list[list[Any]]] = {}
    for row in mart.rows(fact.name):
        if dated and getattr(row, time_attr) == ms.UNKNOWN_KEY:
            continue
        if any(get(row) != value for get, value in tests):
            continue
        key = tuple(get(row) for get in axes)
        acc = groups.get(key)
        if acc is None:
            acc = groups[key] = [[0, 0] for _ in readers]
        for cell, read in zip(acc, readers):
            value = read(row)
            if value is not None:
                cell[0] += value
                cell[1] += 1
    if not query.by and not groups:
        groups[()] = [[0, 0] for _ in readers]

    rows = []
    for key in sorted(groups):
        values = []
        for m, (total, count) in zip(query.measures, groups[key]):
            if m.aggregator == "sum":
                values.append(total)
            elif m.aggregator == "count":
                values.append(count)
            elif count:
                values.append(Fraction(total) / count)
            else:
                break
        else:
            rows.append((key, tuple(values)))
    return ResultGrid(tuple(query.by), query.measures, tuple(rows))


def _finer(level: str | None, than: str | None) -> bool:
    order = (None,) + ms.TIME_LEVELS
    return order.index(level) > order.index(than)


def drill(mart: ms.MartSnapshot, query: Query, level: str) -> ResultGrid:
    """Re-run ``query`` at a finer time level (a query without a time axis counts as coarsest)."""
    if level not in ms.TIME_LEVELS or not _finer(level, query.time_axis):
        raise QueryError(f"cannot drill from {query.time_axis or 'all'} to {level!r}")
    if query.time_axis is None:
        by = query.by + (level,)
    else:
        by = tuple(level if a == query.time_axis else a for a in query.by)
    return run_query(mart, replace(query, by=by, level=level))


def rollup(grid: ResultGrid, level: str | None) -> ResultGrid:
    """Re-aggregate a grid's sum and count columns to a coarser time level.

    ``level=None`` removes the time axis altogether.
    """
    times = [i for i, a in enumerate(grid.axes) if a in ms.TIME_LEVELS]
    if not times:
        raise QueryError("grid has no time axis to roll up")
    pos = times[0]
    current = grid.axes[pos]
    if level is not None and (level not in ms.TIME_LEVELS or not _finer(current, level)):
        raise QueryError(f"cannot roll up from {current!r} to {level!r}")
    if any(m.aggregator == "mean" for m in grid.measures):
        raise QueryError("mean columns cannot be rolled up; query sum and count instead")
    width = {"year": 4, "month": 7}

    def coarsen(key: tuple[str, ...]) -> tuple[str, ...]:
        if level is None:
            return key[:pos] + key[pos + 1:]
        return key[:pos] + (key[pos][: width[level]],) + key[pos + 1:]

    merged: dict[tuple[str, ...], list[Any]] = {}
    for key, values in grid.rows:
        acc = merged.setdefault(coarsen(key), [0] * len(values))
        for i, v in enumerate(values):
            acc[i] += v
    axes = grid.axes if level is not None else grid.axes[:pos] + grid.axes[pos + 1:]
    axes = tuple(level if a == current else a for a in axes)
    return ResultGrid(axes, grid.measures, tuple((k, tuple(merged[k])) for k in sorted(merged)))


def format_value(value: Any) -> str:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return repr(float(value))
    return str(value)


def render_grid_csv(grid: ResultGrid) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(grid.axes) + [m.label for m in grid.measures])
    for key, values in grid.rows:
        writer.writerow(list(key) + [format_value(v) for v in values])
    return out.getvalue()


_MEASURE = re.compile(r"\s*(\w+)\(\s*([\w*]+)\s*\)\s*\Z")


def _parse_measures(text: str) -> Iterable[Measure]:
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = _MEASURE.match(part)
        if not m:
            raise QueryError(f"bad measure {part!r}; expected agg(column)")
        yield Measure(m.group(1), m.group(2))


def parse_query(text: str) -> Query:
    """Parse ``key=value`` clauses separated by ``;``.

    Keys: ``fact``, ``measure`` (``agg(column)``, comma separated or
    repeated), ``by`` (comma separated), ``filter`` (``attr=value``, comma
    separated or repeated), ``level`` and ``timekey``.
    """
    fact = None
    measures: list[Measure] = []
    by: list[str] = []
    filters: list[tuple[str, str]] = []
    level = time_key = None
    for clause in filter(None, (c.strip() for c in text.split(";"))):
        key, sep, value = clause.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise QueryError(f"bad clause {clause!r}; expected key=value")
        if key == "fact":
            fact = value if value.startswith("fact_") else f"fact_{value}"
        elif key == "measure":
            measures.extend(_parse_measures(value))
        elif key == "by":
            by.extend(a.strip() for a in value.split(",") if a.strip())
        elif key == "filter":
            for part in value.split(","):
                attr, sep, wanted = part.partition("=")
                if not sep or not attr.strip():
                    raise QueryError(f"bad filter {part!r}; expected attr=value")
                filters.append((attr.strip(), wanted.strip()))
        elif key == "level":
            level = value
        elif key == "timekey":
            time_key = value
        else:
            raise QueryError(f"unknown query key {key!r}")
    if fact is None:
        raise QueryError("query needs fact=")
    return Query(fact, tuple(measures), tuple(by), tuple(filters), level, time_key)
