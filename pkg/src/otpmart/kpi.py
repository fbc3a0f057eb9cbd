"""Registry and evaluator for the eleven Order-to-Payment business metrics.

Each metric is declared as a fact table, a time key that decides period
membership, and two row rules. A rule is a conjunction of column conditions;
a numerator rule may also name a duration column to sum (in seconds).
Denominator rules always count rows.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Any, Mapping, Union

from . import mart_schema as ms
from . import traceability as trace
from .tables import SECONDS_PER_DAY


class Undefined(enum.Enum):
    """Result of a ratio whose denominator is zero."""

    UNDEFINED = "undefined"

    def __repr__(self) -> str:
        return "UNDEFINED"

    def __str__(self) -> str:
        return "undefined"


UNDEFINED = Undefined.UNDEFINED


class UnknownMetric(LookupError):
    pass


class DisallowedFilter(ValueError):
    pass


_PERIOD_YEAR = re.compile(r"(\d{4})\Z")
_PERIOD_MONTH = re.compile(r"(\d{4})-(\d{2})\Z")
_PERIOD_RANGE = re.compile(r"(\d{4}-\d{2}-\d{2})\.\.(\d{4}-\d{2}-\d{2})\Z")


@dataclass(frozen=True)
class ReportingPeriod:
    """Half-open calendar interval ``[start, end)``."""

    start: date
    end: date
    label: str = ""

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError(f"period start {self.start} must precede end {self.end}")
        if not self.label:
            object.__setattr__(self, "label", f"{self.start.isoformat()}..{self.end.isoformat()}")

    @classmethod
    def parse(cls, text: str) -> ReportingPeriod:
        """Accepts ``YYYY``, ``YYYY-MM`` or ``YYYY-MM-DD..YYYY-MM-DD`` (end exclusive)."""
        try:
            if m := _PERIOD_YEAR.match(text):
                year = int(m.group(1))
                return cls(date(year, 1, 1), date(year + 1, 1, 1), text)
            if m := _PERIOD_MONTH.match(text):
                year, month = int(m.group(1)), int(m.group(2))
                return cls.month(year, month)
            if m := _PERIOD_RANGE.match(text):
                return cls(date.fromisoformat(m.group(1)), date.fromisoformat(m.group(2)), text)
        except ValueError as exc:
            raise ValueError(f"bad period {text!r}: {exc}") from None
        raise ValueError(f"bad period {text!r}: expected YYYY, YYYY-MM or YYYY-MM-DD..YYYY-MM-DD")

    @classmethod
    def month(cls, year: int, month: int) -> ReportingPeriod:
        start = date(year, month, 1)
        end = date(year + month // 12, month % 12 + 1, 1)
        return cls(start, end, f"{year:04d}-{month:02d}")

    @property
    def start_key(self) -> int:
        return self.start.year * 10000 + self.start.month * 100 + self.start.day

    @property
    def end_key(self) -> int:
        return self.end.year * 10000 + self.end.month * 100 + self.end.day

    def contains_key(self, key: int) -> bool:
        return self.start_key <= key < self.end_key

    def contains(self, ts: datetime | None) -> bool:
        return ts is not None and self.start <= ts.date() < self.end

    def months(self) -> list[ReportingPeriod]:
        """Calendar months overlapping the period, clipped to it."""
        out = []
        y, m = self.start.year, self.start.month
        while date(y, m, 1) < self.end:
            whole = ReportingPeriod.month(y, m)
            start, end = max(whole.start, self.start), min(whole.end, self.end)
            out.append(whole if (start, end) == (whole.start, whole.end) else ReportingPeriod(start, end))
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)
        return out


@dataclass(frozen=True)
class Rule:
    """Conjunction of ``(attr, op, value)`` conditions, op in ``==``/``>``."""

    where: tuple[tuple[str, str, Any], ...] = ()
    measure: str | None = None

    def matches(self, row: Any) -> bool:
        for attr, op, value in self.where:
            actual = getattr(row, attr)
            if op == "==":
                if actual != value:
                    return False
            elif actual is None or not actual > value:
                return False
        return True


@dataclass(frozen=True)
class MetricDef:
    metric_id: str
    name: str
    unit: str  # "days" or "percent"
    fact_table: str
    numerator: Rule
    denominator: Rule
    period_anchor: str
    allowed_filters: tuple[str, ...]
    numerator_text: str = ""
    denominator_text: str = ""
    blocks: tuple[int, ...] = ()
    traceability: dict[str, list[str]] = field(default_factory=dict, compare=False)


def _defs() -> list[MetricDef]:
    cust, svc, geo, origin = "partyRoleName", "serviceComponent", "geographicArea", "originatingSystem"
    return [
        MetricDef(
            "F-CE-2a", "Mean duration to fulfill customer order", "days", "fact_fce2abc",
            Rule((("completed_flag", "==", 1),), "order_duration_s"),
            Rule((("completed_flag", "==", 1),)),
            "completion_time_key", (cust,),
            "sum of completion minus placement over completed orders",
            "orders completed in the period",
        ),
        MetricDef(
            "F-CE-2b", "Mean time difference between customer requested delivery date and planned date",
            "days", "fact_fce2abc",
            Rule((("order_delay_s", ">", 0),), "order_delay_s"),
            Rule(),
            "due_time_key", (cust,),
            "sum of dueDate minus customerRequiredDate where the commitment is later",
            "orders with dueDate in the period",
        ),
        MetricDef(
            "F-CE-2c", "% orders delivered by committed date", "percent", "fact_fce2abc",
            Rule((("delivered_flag", "==", 1), ("on_time_flag", "==", 1))),
            Rule((("delivered_flag", "==", 1),)),
            "delivery_time_key", (cust,),
            "deliveries with deliveryDate <= dueDate",
            "deliveries in the period",
        ),
        MetricDef(
            "F-CE-3", "% service usability queries", "percent", "fact_fce3",
            Rule((("event_type", "==", "inquiry"),)),
            Rule((("event_type", "==", "activation"),)),
            "time_key", (svc, cust),
            "usability inquiries in the period",
            "service activations (cfsStatus 0) completed in the period",
        ),
        MetricDef(
            "F-CE-4", "% service activation failures", "percent", "fact_fce4",
            Rule((("failed_flag", "==", 1),)),
            Rule((("delivered_flag", "==", 1),)),
            "time_key", (cust, svc),
            "failed activations (cfsStatus 6) confirmed by a customer-reported activation-failure problem",
            "completed activations (cfsStatus 0)",
        ),
        MetricDef(
            "F-CE-4b", "% of service faulty within 28 days of provisioning", "percent", "fact_fce4b",
            Rule((("early_fault_flag", "==", 1),)),
            Rule(),
            "completion_time_key", (cust, svc),
            "accepted orders with a problem raised 0-28 days after delivery",
            "orders accepted in the period",
        ),
        MetricDef(
            "F-OE-2a", "Mean time order to activation", "days", "fact_foe2a",
            Rule((), "total_s"),
            Rule(),
            "completion_time_key", (geo,),
            "sum of the five meta-process durations over complete chains",
            "complete chains accepted in the period",
        ),
        MetricDef(
            "F-OE-2b", "Order to activation time by major process", "days", "fact_foe2b",
            Rule((), "duration_s"),
            Rule(),
            "completion_time_key", (cust,),
            "sum of one meta-process block's duration",
            "complete chains accepted in the period",
            blocks=(1, 2, 3, 4, 5),
        ),
        MetricDef(
            "F-OE-3a", "% orders requiring rework by cause type", "percent", "fact_foe3a",
            Rule((("rework_flag", "==", 1),)),
            Rule(),
            "completion_time_key", (origin, svc),
            "service orders with reworkNo > 0",
            "service orders completed in the period",
        ),
        MetricDef(
            "F-OE-3b", "Mean time to handle defects or rework from order to customer acceptance", "days",
            "fact_foe3b",
            Rule((), "resolution_s"),
            Rule(),
            "restored_time_key", (svc, origin, cust),
            "sum of serviceRestoredDate minus troubleDetectionDate over service-order tickets",
            "service-order tickets restored in the period",
        ),
        MetricDef(
            "F-OE-3d", "% orders pending error fix", "percent", "fact_foe3d",
            Rule((("pending_flag", "==", 1),)),
            Rule(),
            "raised_time_key", (cust, svc),
            "customer-order tickets in state Pending",
            "customer-order tickets raised in the period",
        ),
    ]


def _build_registry() -> dict[str, MetricDef]:
    registry = {}
    for d in _defs():
        object.__setattr__(d, "traceability", trace.traceability(d.metric_id))
        fact = ms.FACTS[d.fact_table]
        for attr in d.allowed_filters:
            dim = ms.ATTRIBUTES[attr][0]
            if ms.dimension_fk(d.fact_table, dim) is None:
                raise AssertionError(f"{d.metric_id}: {attr} not reachable from {d.fact_table}")
        assert d.period_anchor in fact.time_keys
        registry[d.metric_id] = d
    assert len(registry) == 11 and list(registry) == trace.load()["metrics"]
    return registry


REGISTRY: dict[str, MetricDef] = _build_registry()


def list_metrics() -> list[MetricDef]:
    return list(REGISTRY.values())


def get_metric(metric_id: str) -> MetricDef:
    try:
        return REGISTRY[metric_id]
    except KeyError:
        raise UnknownMetric(f"unknown metric {metric_id!r}") from None


@dataclass(frozen=True)
class MetricValue:
    metric_id: str
    value: float | Undefined
    unit: str
    numerator: float | int
    denominator: int
    period: str
    filters: tuple[tuple[str, str], ...] = ()
    block: int | None = None
    numerator_seconds: int | None = None

    @property
    def defined(self) -> bool:
        return self.value is not UNDEFINED

    def to_json(self) -> dict:
        out = {
            "metric": self.metric_id,
            "value": "undefined" if self.value is UNDEFINED else self.value,
            "unit": self.unit,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "period": self.period,
            "filters": dict(self.filters),
        }
        if self.block is not None:
            out["block"] = self.block
        return out


MetricResult = Union[MetricValue, tuple[MetricValue, ...]]


def make_value(
    mdef: MetricDef,
    numerator: int,
    denominator: int,
    period: ReportingPeriod,
    filters: Mapping[str, str],
    block: int | None = None,
) -> MetricValue:
    """Turn raw tallies (a count, or seconds for day metrics) into a MetricValue."""
    if mdef.unit == "days":
        num: float | int = numerator / SECONDS_PER_DAY
        seconds = numerator
    else:
        num, seconds = numerator, None
    if denominator == 0:
        value: float | Undefined = UNDEFINED
    elif mdef.unit == "percent":
        value = 100.0 * numerator / denominator
    else:
        value = num / denominator
    return MetricValue(
        mdef.metric_id, value, mdef.unit, num, denominator, period.label,
        tuple(sorted(filters.items())), block, seconds,
    )


def check_filters(mdef: MetricDef, filters: Mapping[str, str]) -> None:
    bad = sorted(set(filters) - set(mdef.allowed_filters))
    if bad:
        raise DisallowedFilter(
            f"{mdef.metric_id} does not allow filter(s) {bad}; allowed: {list(mdef.allowed_filters)}"
        )


def check_group_by(mdef: MetricDef, group_by: str) -> None:
    if group_by not in mdef.allowed_filters and group_by not in ms.TIME_LEVELS:
        raise DisallowedFilter(
            f"{mdef.metric_id} cannot be grouped by {group_by!r}; "
            f"allowed: {list(mdef.allowed_filters) + list(ms.TIME_LEVELS)}"
        )


def _tally(
    mart: ms.MartSnapshot,
    mdef: MetricDef,
    period: ReportingPeriod,
    filters: Mapping[str, str],
    group_by: str | None,
) -> dict[str, dict[int | None, list[int]]]:
    """group label -> block -> [numerator, denominator]."""
    tests = []
    for attr, value in filters.items():
        fk = ms.dimension_fk(mdef.fact_table, ms.ATTRIBUTES[attr][0])
        tests.append((fk, mart.attribute_lookup(attr), str(value)))
    grouper = None
    if group_by in ms.TIME_LEVELS:
        grouper = ("time", None)
    elif group_by is not None:
        grouper = (ms.dimension_fk(mdef.fact_table, ms.ATTRIBUTES[group_by][0]), mart.attribute_lookup(group_by))

    lo, hi = period.start_key, period.end_key
    anchor, num_rule, den_rule = mdef.period_anchor, mdef.numerator, mdef.denominator
    out: dict[str, dict[int | None, list[int]]] = {}
    for row in mart.rows(mdef.fact_table):
        key = getattr(row, anchor)
        if not lo <= key < hi:
            continue
        if any(lookup.get(getattr(row, fk)) != value for fk, lookup, value in tests):
            continue
        if grouper is None:
            label = ""
        elif grouper[0] == "time":
            label = ms.time_label(key, group_by)
        else:
            label = grouper[1].get(getattr(row, grouper[0]), ms.UNKNOWN_LABEL)
        block = row.block_id if mdef.blocks else None
        cell = out.setdefault(label, {}).setdefault(block, [0, 0])
        if den_rule.matches(row):
            cell[1] += 1
        if num_rule.matches(row):
            if num_rule.measure is None:
                cell[0] += 1
            else:
                measure = getattr(row, num_rule.measure)
                if measure is not None:
                    cell[0] += measure
    return out


def result_from_cells(mdef, cells, period, filters) -> MetricResult:
    """Build the result from ``block -> [numerator, denominator]`` tallies."""
    if mdef.blocks:
        return tuple(
            make_value(mdef, *cells.get(b, (0, 0)), period, filters, block=b) for b in mdef.blocks
        )
    return make_value(mdef, *cells.get(None, (0, 0)), period, filters)


def evaluate(
    mart: ms.MartSnapshot,
    metric_id: str,
    period: ReportingPeriod,
    filters: Mapping[str, str] | None = None,
) -> MetricResult:
    """Evaluate one metric over a period.

    Returns a MetricValue, or for F-OE-2b a tuple of five, one per
    meta-process block.
    """
    mdef = get_metric(metric_id)
    filters = dict(filters or {})
    check_filters(mdef, filters)
    cells = _tally(mart, mdef, period, filters, None).get("", {})
    return result_from_cells(mdef, cells, period, filters)


def evaluate_grouped(
    mart: ms.MartSnapshot,
    metric_id: str,
    period: ReportingPeriod,
    group_by: str,
    filters: Mapping[str, str] | None = None,
) -> dict[str, MetricResult]:
    """One result per group value that has any numerator or denominator, in label order.

    A group can carry numerator events without denominator events (failures
    raised in a month with no completed activation, say). It is kept, with an
    undefined value, so that group tallies always add up to the ungrouped ones.

    ``group_by`` is one of the metric's filter attributes or a time level
    (year, month, day) applied to the metric's period anchor.
    """
    mdef = get_metric(metric_id)
    filters = dict(filters or {})
    check_filters(mdef, filters)
    check_group_by(mdef, group_by)
    groups = _tally(mart, mdef, period, filters, group_by)
    out: dict[str, MetricResult] = {}
    for label in sorted(groups):
        cells = groups[label]
        if not any(num or den for num, den in cells.values()):
            continue
        group_filters = dict(filters)
        if group_by not in ms.TIME_LEVELS:
            group_filters[group_by] = label
        out[label] = result_from_cells(mdef, cells, period, group_filters)
    return out


def as_values(result: MetricResult) -> tuple[MetricValue, ...]:
    return result if isinstance(result, tuple) else (result,)
