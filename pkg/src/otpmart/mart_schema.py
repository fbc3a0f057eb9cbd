"""The Order-to-Payment constellation: five shared dimensions and nine facts.

Durations are held as whole seconds on the fact rows and written to CSV as
fractional days with six decimals, which reads back to the same second.
Surrogate key 0 is the reserved "unknown" member of every dimension and is
never stored as a dimension row.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .tables import Column, TableSpec, TableFormatError

UNKNOWN_KEY = 0
UNKNOWN_LABEL = "(unknown)"


@dataclass(frozen=True, slots=True)
class DimTime:
    time_key: int
    day: int
    month: int
    year: int


@dataclass(frozen=True, slots=True)
class DimCustomer:
    customer_key: int
    customer_id: str
    party_role_name: str


@dataclass(frozen=True, slots=True)
class DimPlace:
    place_key: int
    place_id: str
    geographic_area: str


@dataclass(frozen=True, slots=True)
class DimService:
    service_key: int
    cfs_id: str
    service_component: str
    cfs_status: int


@dataclass(frozen=True, slots=True)
class DimServiceProblem:
    sp_key: int
    service_problem_id: str
    originating_system: str
    reason: str


@dataclass(frozen=True, slots=True)
class OrderFulfillmentFact:
    """F-CE-2a/2b/2c grain: one row per customer order."""

    customer_order_id: str
    customer_key: int
    completion_time_key: int
    due_time_key: int
    delivery_time_key: int
    order_duration_s: int | None
    order_delay_s: int | None
    on_time_flag: int | None
    completed_flag: int
    delivered_flag: int


@dataclass(frozen=True, slots=True)
class UsabilityQueryFact:
    """F-CE-3: one row per usability inquiry and one per activated service."""

    event_id: str
    event_type: str
    customer_key: int
    service_key: int
    time_key: int
    count: int = 1


@dataclass(frozen=True, slots=True)
class ActivationFailureFact:
    service_key: int
    customer_key: int
    sp_key: int
    time_key: int
    failed_flag: int
    delivered_flag: int


@dataclass(frozen=True, slots=True)
class EarlyLifeFaultFact:
    customer_order_id: str
    customer_key: int
    service_key: int
    completion_time_key: int
    early_fault_flag: int


@dataclass(frozen=True, slots=True)
class OrderToActivationFact:
    chain_id: str
    customer_key: int
    place_key: int
    completion_time_key: int
    mp1_s: int
    mp2_s: int
    mp3_s: int
    mp4_s: int
    mp5_s: int
    total_s: int


@dataclass(frozen=True, slots=True)
class ActivationByProcessFact:
    chain_id: str
    customer_key: int
    completion_time_key: int
    block_id: int
    duration_s: int


@dataclass(frozen=True, slots=True)
class ReworkFact:
    service_order_id: str
    sp_key: int
    service_key: int
    completion_time_key: int
    rework_flag: int


@dataclass(frozen=True, slots=True)
class ReworkHandlingFact:
    trouble_ticket_id: str
    customer_key: int
    service_key: int
    sp_key: int
    restored_time_key: int
    resolution_s: int | None


@dataclass(frozen=True, slots=True)
class PendingErrorFixFact:
    trouble_ticket_id: str
    customer_key: int
    service_key: int
    raised_time_key: int
    pending_flag: int


def _key(*attrs: str):
    if len(attrs) == 1:
        attr = attrs[0]
        return lambda row: getattr(row, attr)
    return lambda row: tuple(getattr(row, a) for a in attrs)


def _spec(name: str, row_type: type, cols: list[tuple], *sort_attrs: str) -> TableSpec:
    return TableSpec(f"{name}.csv", row_type, tuple(Column(*c) for c in cols), _key(*sort_attrs))


@dataclass(frozen=True)
class DimensionSpec:
    name: str
    table: TableSpec
    key_attr: str


@dataclass(frozen=True)
class FactSpec:
    name: str
    table: TableSpec
    foreign_keys: dict[str, str]  # fk attribute -> dimension name
    time_keys: tuple[str, ...]  # role-playing time keys, default first
    measures: tuple[str, ...]  # numeric column headers usable as query measures


DIMENSIONS: dict[str, DimensionSpec] = {
    d.name: d
    for d in (
        DimensionSpec(
            "dim_time",
            _spec("dim_time", DimTime,
                  [("timeKey", "time_key", "int"), ("day", "day", "int"),
                   ("month", "month", "int"), ("year", "year", "int")], "time_key"),
            "time_key",
        ),
        DimensionSpec(
            "dim_customer",
            _spec("dim_customer", DimCustomer,
                  [("customerKey", "customer_key", "int"), ("customerId", "customer_id"),
                   ("partyRoleName", "party_role_name")], "customer_key"),
            "customer_key",
        ),
        DimensionSpec(
            "dim_place",
            _spec("dim_place", DimPlace,
                  [("placeKey", "place_key", "int"), ("placeId", "place_id"),
                   ("geographicArea", "geographic_area")], "place_key"),
            "place_key",
        ),
        DimensionSpec(
            "dim_service",
            _spec("dim_service", DimService,
                  [("serviceKey", "service_key", "int"), ("cfsId", "cfs_id"),
                   ("serviceComponent", "service_component"), ("cfsStatus", "cfs_status", "int")],
                  "service_key"),
            "service_key",
        ),
        DimensionSpec(
            "dim_service_problem",
            _spec("dim_service_problem", DimServiceProblem,
                  [("spKey", "sp_key", "int"), ("serviceProblemId", "service_problem_id"),
                   ("originatingSystem", "originating_system"), ("reason", "reason")], "sp_key"),
            "sp_key",
        ),
    )
}

_CUST = ("customer_key", "dim_customer")
_PLACE = ("place_key", "dim_place")
_SERV = ("service_key", "dim_service")
_SP = ("sp_key", "dim_service_problem")

FACTS: dict[str, FactSpec] = {
    f.name: f
    for f in (
        FactSpec(
            "fact_fce2abc",
            _spec("fact_fce2abc", OrderFulfillmentFact, [
                ("customerOrderId", "customer_order_id"),
                ("customerKey", "customer_key", "int"),
                ("completionTimeKey", "completion_time_key", "int"),
                ("dueTimeKey", "due_time_key", "int"),
                ("deliveryTimeKey", "delivery_time_key", "int"),
                ("orderDurationDays", "order_duration_s", "days"),
                ("orderDelayDays", "order_delay_s", "days"),
                ("onTimeFlag", "on_time_flag", "opt_int"),
                ("completedFlag", "completed_flag", "int"),
                ("deliveredFlag", "delivered_flag", "int"),
            ], "customer_order_id"),
            dict([_CUST]),
            ("completion_time_key", "due_time_key", "delivery_time_key"),
            ("orderDurationDays", "orderDelayDays", "onTimeFlag", "completedFlag", "deliveredFlag"),
        ),
        FactSpec(
            "fact_fce3",
            _spec("fact_fce3", UsabilityQueryFact, [
                ("eventId", "event_id"),
                ("eventType", "event_type"),
                ("customerKey", "customer_key", "int"),
                ("serviceKey", "service_key", "int"),
                ("timeKey", "time_key", "int"),
                ("count", "count", "int"),
            ], "event_type", "event_id"),
            dict([_CUST, _SERV]),
            ("time_key",),
            ("count",),
        ),
        FactSpec(
            "fact_fce4",
            _spec("fact_fce4", ActivationFailureFact, [
                ("serviceKey", "service_key", "int"),
                ("customerKey", "customer_key", "int"),
                ("spKey", "sp_key", "int"),
                ("timeKey", "time_key", "int"),
                ("failedFlag", "failed_flag", "int"),
                ("deliveredFlag", "delivered_flag", "int"),
            ], "service_key"),
            dict([_SERV, _CUST, _SP]),
            ("time_key",),
            ("failedFlag", "deliveredFlag"),
        ),
        FactSpec(
            "fact_fce4b",
            _spec("fact_fce4b", EarlyLifeFaultFact, [
                ("customerOrderId", "customer_order_id"),
                ("customerKey", "customer_key", "int"),
                ("serviceKey", "service_key", "int"),
                ("completionTimeKey", "completion_time_key", "int"),
                ("earlyFaultFlag", "early_fault_flag", "int"),
            ], "customer_order_id"),
            dict([_CUST, _SERV]),
            ("completion_time_key",),
            ("earlyFaultFlag",),
        ),
        FactSpec(
            "fact_foe2a",
            _spec("fact_foe2a", OrderToActivationFact, [
                ("chainId", "chain_id"),
                ("customerKey", "customer_key", "int"),
                ("placeKey", "place_key", "int"),
                ("completionTimeKey", "completion_time_key", "int"),
                ("mp1", "mp1_s", "days"),
                ("mp2", "mp2_s", "days"),
                ("mp3", "mp3_s", "days"),
                ("mp4", "mp4_s", "days"),
                ("mp5", "mp5_s", "days"),
                ("totalDays", "total_s", "days"),
            ], "chain_id"),
            dict([_CUST, _PLACE]),
            ("completion_time_key",),
            ("mp1", "mp2", "mp3", "mp4", "mp5", "totalDays"),
        ),
        FactSpec(
            "fact_foe2b",
            _spec("fact_foe2b", ActivationByProcessFact, [
                ("chainId", "chain_id"),
                ("customerKey", "customer_key", "int"),
                ("completionTimeKey", "completion_time_key", "int"),
                ("blockId", "block_id", "int"),
                ("durationDays", "duration_s", "days"),
            ], "chain_id", "block_id"),
            dict([_CUST]),
            ("completion_time_key",),
            ("durationDays",),
        ),
        FactSpec(
            "fact_foe3a",
            _spec("fact_foe3a", ReworkFact, [
                ("serviceOrderId", "service_order_id"),
                ("spKey", "sp_key", "int"),
                ("serviceKey", "service_key", "int"),
                ("completionTimeKey", "completion_time_key", "int"),
                ("reworkFlag", "rework_flag", "int"),
            ], "service_order_id"),
            dict([_SP, _SERV]),
            ("completion_time_key",),
            ("reworkFlag",),
        ),
        FactSpec(
            "fact_foe3b",
            _spec("fact_foe3b", ReworkHandlingFact, [
                ("troubleTicketId", "trouble_ticket_id"),
                ("customerKey", "customer_key", "int"),
                ("serviceKey", "service_key", "int"),
                ("spKey", "sp_key", "int"),
                ("restoredTimeKey", "restored_time_key", "int"),
                ("resolutionDays", "resolution_s", "days"),
            ], "trouble_ticket_id"),
            dict([_CUST, _SERV, _SP]),
            ("restored_time_key",),
            ("resolutionDays",),
        ),
        FactSpec(
            "fact_foe3d",
            _spec("fact_foe3d", PendingErrorFixFact, [
                ("troubleTicketId", "trouble_ticket_id"),
                ("customerKey", "customer_key", "int"),
                ("serviceKey", "service_key", "int"),
                ("raisedTimeKey", "raised_time_key", "int"),
                ("pendingFlag", "pending_flag", "int"),
            ], "trouble_ticket_id"),
            dict([_CUST, _SERV]),
            ("raised_time_key",),
            ("pendingFlag",),
        ),
    )
}

# Dimension attributes addressable by filters and group-bys: name -> (dimension, attribute)
ATTRIBUTES: dict[str, tuple[str, str]] = {
    "customerId": ("dim_customer", "customer_id"),
    "partyRoleName": ("dim_customer", "party_role_name"),
    "placeId": ("dim_place", "place_id"),
    "geographicArea": ("dim_place", "geographic_area"),
    "cfsId": ("dim_service", "cfs_id"),
    "serviceComponent": ("dim_service", "service_component"),
    "cfsStatus": ("dim_service", "cfs_status"),
    "serviceProblemId": ("dim_service_problem", "service_problem_id"),
    "originatingSystem": ("dim_service_problem", "originating_system"),
    "reason": ("dim_service_problem", "reason"),
}
TIME_LEVELS = ("year", "month", "day")


def dimension_fk(fact: str, dimension: str) -> str | None:
    """Foreign-key attribute of ``fact`` pointing at ``dimension``, if any."""
    for attr, dim in FACTS[fact].foreign_keys.items():
        if dim == dimension:
            return attr
    return None


def time_label(key: int, level: str) -> str:
    """Render a YYYYMMDD key at ``level`` granularity: 2024, 2024-01 or 2024-01-15."""
    year, month, day = key // 10000, key // 100 % 100, key % 100
    if level == "year":
        return f"{year:04d}"
    if level == "month":
        return f"{year:04d}-{month:02d}"
    if level == "day":
        return f"{year:04d}-{month:02d}-{day:02d}"
    raise ValueError(f"unknown time level {level!r}")


@dataclass(frozen=True)
class MartSnapshot:
    dim_time: tuple[DimTime, ...] = ()
    dim_customer: tuple[DimCustomer, ...] = ()
    dim_place: tuple[DimPlace, ...] = ()
    dim_service: tuple[DimService, ...] = ()
    dim_service_problem: tuple[DimServiceProblem, ...] = ()
    fact_fce2abc: tuple[OrderFulfillmentFact, ...] = ()
    fact_fce3: tuple[UsabilityQueryFact, ...] = ()
    fact_fce4: tuple[ActivationFailureFact, ...] = ()
    fact_fce4b: tuple[EarlyLifeFaultFact, ...] = ()
    fact_foe2a: tuple[OrderToActivationFact, ...] = ()
    fact_foe2b: tuple[ActivationByProcessFact, ...] = ()
    fact_foe3a: tuple[ReworkFact, ...] = ()
    fact_foe3b: tuple[ReworkHandlingFact, ...] = ()
    fact_foe3d: tuple[PendingErrorFixFact, ...] = ()
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name, spec in _all_tables().items():
            object.__setattr__(self, name, tuple(sorted(getattr(self, name), key=spec.sort_key)))

    def rows(self, table: str) -> tuple[Any, ...]:
        return getattr(self, table)

    def dimension(self, name: str) -> dict[int, Any]:
        """Surrogate key -> dimension row (cached)."""
        if name not in self._index:
            key_attr = DIMENSIONS[name].key_attr
            self._index[name] = {getattr(r, key_attr): r for r in getattr(self, name)}
        return self._index[name]

    def attribute_lookup(self, attribute: str) -> dict[int, str]:
        """Surrogate key -> value of a dimension attribute, as text, incl. the unknown member."""
        cache_key = ("attr", attribute)
        if cache_key not in self._index:
            dim, attr = ATTRIBUTES[attribute]
            lookup = {k: str(getattr(r, attr)) for k, r in self.dimension(dim).items()}
            lookup[UNKNOWN_KEY] = UNKNOWN_LABEL
            self._index[cache_key] = lookup
        return self._index[cache_key]

    def row_counts(self) -> dict[str, int]:
        return {f"{name}.csv": len(getattr(self, name)) for name in _all_tables()}


def _all_tables() -> dict[str, TableSpec]:
    tables = {name: d.table for name, d in DIMENSIONS.items()}
    tables.update({name: f.table for name, f in FACTS.items()})
    return tables


class MartError(ValueError):
    pass


def foreign_key_problems(mart: MartSnapshot) -> list[str]:
    """Dangling foreign keys and malformed dimension keys, as readable strings."""
    problems = []
    for name, dim in DIMENSIONS.items():
        keys = [getattr(r, dim.key_attr) for r in mart.rows(name)]
        if len(set(keys)) != len(keys):
            problems.append(f"{name}: duplicate surrogate keys")
        if any(k <= 0 for k in keys):
            problems.append(f"{name}: surrogate keys must be positive")
    times = mart.dimension("dim_time")
    for name, fact in FACTS.items():
        for i, row in enumerate(mart.rows(name)):
            for attr, dim in fact.foreign_keys.items():
                key = getattr(row, attr)
                if key != UNKNOWN_KEY and key not in mart.dimension(dim):
                    problems.append(f"{name} row {i}: {attr}={key} not in {dim}")
            for attr in fact.time_keys:
                key = getattr(row, attr)
                if key != UNKNOWN_KEY and key not in times:
                    problems.append(f"{name} row {i}: {attr}={key} not in dim_time")
    return problems


def write_mart(mart: MartSnapshot, directory: str | Path) -> dict[str, int]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, spec in _all_tables().items():
        rows = mart.rows(name)
        spec.write(rows, directory)
        manifest[spec.filename] = len(rows)
    return manifest


def read_mart(directory: str | Path) -> MartSnapshot:
    """Load the 14 mart CSV files; raises MartError on dangling keys."""
    directory = Path(directory)
    tables = {}
    problems = []
    for name, spec in _all_tables().items():
        try:
            tables[name] = tuple(row for _, row in spec.read(directory))
        except TableFormatError as exc:
            problems.extend(exc.problems)
    if problems:
        raise MartError("\n".join(problems))
    mart = MartSnapshot(**tables)
    problems = foreign_key_problems(mart)
    if problems:
        raise MartError("\n".join(problems[:20]))
    return mart


TABLE_NAMES = tuple(f.name for f in fields(MartSnapshot) if not f.name.startswith("_"))
