"""Source entities of the Order-to-Payment information model and their checks.

The record types carry the attributes the eleven KPIs need. Orders, services,
problems and tickets of one fulfillment are tied together by ``chain_id``
(the business-interaction identifier): one customer order per chain, at most
one service order, one resource order and one customer-facing service.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable

from .tables import Column, TableFormatError, TableSpec

CFS_DELIVERED = 0
CFS_FAILED = 6
# 0 = delivered/active, 6 = failed; 1-5 are accepted but carry no meaning
CFS_STATUS_CODES = frozenset(range(0, 7))

ACTIVATION_FAILURE = "delivery or activation failure"
PROBLEM_REASONS = (
    ACTIVATION_FAILURE,
    "configuration error",
    "equipment fault",
    "network outage",
)
CUSTOMER_REPORT = "customer report"
FIRST_ALERTS = (CUSTOMER_REPORT, "network monitoring", "field technician")

TICKET_PENDING = "Pending"
TICKET_STATES = ("Open", TICKET_PENDING, "Resolved", "Closed")
LINKED_CUSTOMER_ORDER = "customer-order"
LINKED_SERVICE_ORDER = "service-order"
LINKED_ORDER_KINDS = (LINKED_CUSTOMER_ORDER, LINKED_SERVICE_ORDER)

USABILITY_INQUIRY = "usability inquiry"
INQUIRY_TYPES = (USABILITY_INQUIRY, "billing inquiry", "general inquiry")

# Published list of validation rules; every Violation names exactly one.
RULES = (
    "duplicate-id",
    "dangling-reference",
    "orphan-chain",
    "duplicate-chain",
    "temporal-order",
    "chain-nesting",
    "invalid-value",
)


@dataclass(frozen=True, slots=True)
class Customer:
    customer_id: str
    party_role_name: str


@dataclass(frozen=True, slots=True)
class Place:
    place_id: str
    geographic_area: str


@dataclass(frozen=True, slots=True)
class CustomerOrder:
    customer_order_id: str
    chain_id: str
    customer_ref: str
    place_ref: str
    interaction_date: datetime
    interaction_date_complete: datetime | None
    delivery_date: datetime | None
    due_date: datetime
    customer_required_date: datetime
    rework_no: int = 0


@dataclass(frozen=True, slots=True)
class ServiceOrder:
    service_order_id: str
    chain_id: str
    interaction_date: datetime
    interaction_date_complete: datetime | None
    due_date: datetime
    customer_required_date: datetime
    delivery_date: datetime | None
    rework_no: int = 0


@dataclass(frozen=True, slots=True)
class ResourceOrder:
    resource_order_id: str
    chain_id: str
    interaction_date: datetime
    interaction_date_complete: datetime | None
    due_date: datetime
    customer_required_date: datetime
    delivery_date: datetime | None
    rework_no: int = 0


@dataclass(frozen=True, slots=True)
class CustomerFacingService:
    cfs_id: str
    chain_id: str
    service_component: str
    cfs_status: int
    is_service_enabled: bool = False
    has_started: bool = False


@dataclass(frozen=True, slots=True)
class ServiceProblem:
    service_problem_id: str
    chain_id: str
    originating_system: str
    reason: str
    first_alert: str
    time_raised: datetime


@dataclass(frozen=True, slots=True)
class TroubleTicket:
    trouble_ticket_id: str
    chain_id: str
    linked_order_kind: str
    trouble_ticket_state: str
    trouble_detection_date: datetime
    service_restored_date: datetime | None
    interaction_date: datetime
    interaction_date_complete: datetime | None


@dataclass(frozen=True, slots=True)
class CustomerInquiry:
    customer_inquiry_id: str
    customer_ref: str
    inquiry_type: str
    interaction_date: datetime
    chain_id: str | None = None


def _order_columns(id_header: str, id_attr: str, with_parties: bool) -> tuple[Column, ...]:
    cols = [Column(id_header, id_attr), Column("chainId", "chain_id")]
    if with_parties:
        cols += [Column("customerRef", "customer_ref"), Column("placeRef", "place_ref")]
    cols += [
        Column("interactionDate", "interaction_date", "ts"),
        Column("interactionDateComplete", "interaction_date_complete", "opt_ts"),
    ]
    if with_parties:
        cols += [
            Column("deliveryDate", "delivery_date", "opt_ts"),
            Column("dueDate", "due_date", "ts"),
            Column("customerRequiredDate", "customer_required_date", "ts"),
        ]
    else:
        cols += [
            Column("dueDate", "due_date", "ts"),
            Column("customerRequiredDate", "customer_required_date", "ts"),
            Column("deliveryDate", "delivery_date", "opt_ts"),
        ]
    cols.append(Column("reworkNo", "rework_no", "int"))
    return tuple(cols)


def _by(attr: str):
    return lambda row: getattr(row, attr)


# dataset field -> (spec, primary-key attribute, entity name)
SOURCE_TABLES: dict[str, tuple[TableSpec, str, str]] = {
    "customers": (
        TableSpec(
            "customers.csv",
            Customer,
            (Column("customerId", "customer_id"), Column("partyRoleName", "party_role_name")),
            _by("customer_id"),
        ),
        "customer_id",
        "Customer",
    ),
    "places": (
        TableSpec(
            "places.csv",
            Place,
            (Column("placeId", "place_id"), Column("geographicArea", "geographic_area")),
            _by("place_id"),
        ),
        "place_id",
        "Place",
    ),
    "customer_orders": (
        TableSpec(
            "customer_orders.csv",
            CustomerOrder,
            _order_columns("customerOrderId", "customer_order_id", True),
            _by("customer_order_id"),
        ),
        "customer_order_id",
        "CustomerOrder",
    ),
    "service_orders": (
        TableSpec(
            "service_orders.csv",
            ServiceOrder,
            _order_columns("serviceOrderId", "service_order_id", False),
            _by("service_order_id"),
        ),
        "service_order_id",
        "ServiceOrder",
    ),
    "resource_orders": (
        TableSpec(
            "resource_orders.csv",
            ResourceOrder,
            _order_columns("resourceOrderId", "resource_order_id", False),
            _by("resource_order_id"),
        ),
        "resource_order_id",
        "ResourceOrder",
    ),
    "cfs": (
        TableSpec(
            "cfs.csv",
            CustomerFacingService,
            (
                Column("cfsId", "cfs_id"),
                Column("chainId", "chain_id"),
                Column("serviceComponent", "service_component"),
                Column("cfsStatus", "cfs_status", "int"),
                Column("isServiceEnabled", "is_service_enabled", "bool"),
                Column("hasStarted", "has_started", "bool"),
            ),
            _by("cfs_id"),
        ),
        "cfs_id",
        "CustomerFacingService",
    ),
    "service_problems": (
        TableSpec(
            "service_problems.csv",
            ServiceProblem,
            (
                Column("serviceProblemId", "service_problem_id"),
                Column("chainId", "chain_id"),
                Column("originatingSystem", "originating_system"),
                Column("reason", "reason"),
                Column("firstAlert", "first_alert"),
                Column("timeRaised", "time_raised", "ts"),
            ),
            _by("service_problem_id"),
        ),
        "service_problem_id",
        "ServiceProblem",
    ),
    "trouble_tickets": (
        TableSpec(
            "trouble_tickets.csv",
            TroubleTicket,
            (
                Column("troubleTicketId", "trouble_ticket_id"),
                Column("chainId", "chain_id"),
                Column("linkedOrderKind", "linked_order_kind"),
                Column("troubleTicketState", "trouble_ticket_state"),
                Column("troubleDetectionDate", "trouble_detection_date", "ts"),
                Column("serviceRestoredDate", "service_restored_date", "opt_ts"),
                Column("interactionDate", "interaction_date", "ts"),
                Column("interactionDateComplete", "interaction_date_complete", "opt_ts"),
            ),
            _by("trouble_ticket_id"),
        ),
        "trouble_ticket_id",
        "TroubleTicket",
    ),
    "customer_inquiries": (
        TableSpec(
            "customer_inquiries.csv",
            CustomerInquiry,
            (
                Column("customerInquiryId", "customer_inquiry_id"),
                Column("customerRef", "customer_ref"),
                Column("inquiryType", "inquiry_type"),
                Column("interactionDate", "interaction_date", "ts"),
                Column("chainId", "chain_id", "opt_str"),
            ),
            _by("customer_inquiry_id"),
        ),
        "customer_inquiry_id",
        "CustomerInquiry",
    ),
}


@dataclass(frozen=True)
class SourceDataset:
    """All source tables. Rows are held as tuples sorted by primary identifier."""

    customers: tuple[Customer, ...] = ()
    places: tuple[Place, ...] = ()
    customer_orders: tuple[CustomerOrder, ...] = ()
    service_orders: tuple[ServiceOrder, ...] = ()
    resource_orders: tuple[ResourceOrder, ...] = ()
    cfs: tuple[CustomerFacingService, ...] = ()
    service_problems: tuple[ServiceProblem, ...] = ()
    trouble_tickets: tuple[TroubleTicket, ...] = ()
    customer_inquiries: tuple[CustomerInquiry, ...] = ()

    def __post_init__(self) -> None:
        for name, (spec, _, _) in SOURCE_TABLES.items():
            object.__setattr__(self, name, tuple(sorted(getattr(self, name), key=spec.sort_key)))

    def row_counts(self) -> dict[str, int]:
        return {SOURCE_TABLES[f.name][0].filename: len(getattr(self, f.name)) for f in fields(self)}


class SourceFormatError(TableFormatError):
    """Source files exist but contain unparseable rows or duplicate identifiers."""


def load_source(directory: str | Path) -> SourceDataset:
    """Read the nine source CSV files from ``directory``.

    Raises FileNotFoundError for a missing file and SourceFormatError, with
    one ``file:line`` entry per problem, for malformed rows or duplicate ids.
    """
    directory = Path(directory)
    tables: dict[str, list[Any]] = {}
    problems: list[str] = []
    for name, (spec, key_attr, _) in SOURCE_TABLES.items():
        try:
            parsed = spec.read(directory)
        except TableFormatError as exc:
            problems.extend(exc.problems)
            continue
        seen: dict[str, int] = {}
        rows = []
        key_header = spec.columns[0].header
        for line, row in parsed:
            key = getattr(row, key_attr)
            if key in seen:
                problems.append(
                    f"{spec.filename}:{line}: duplicate {key_header} {key!r} "
                    f"(lines {seen[key]} and {line})"
                )
                continue
            seen[key] = line
            rows.append(row)
        tables[name] = rows
    if problems:
        raise SourceFormatError(problems)
    return SourceDataset(**tables)


@dataclass(frozen=True, slots=True)
class Violation:
    entity: str
    id: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.rule}: {self.entity} {self.id}"
        return f"{text} ({self.detail})" if self.detail else text


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def rules(self) -> Counter:
        return Counter(v.rule for v in self.violations)


def validate(dataset: SourceDataset) -> ValidationReport:
    """Check per-record and cross-table consistency. Never modifies ``dataset``."""
    out: list[Violation] = []

    def add(entity: str, ident: str, rule: str, detail: str = "") -> None:
        out.append(Violation(entity, ident, rule, detail))

    for name, (_, key_attr, entity) in SOURCE_TABLES.items():
        counts = Counter(getattr(r, key_attr) for r in getattr(dataset, name))
        for ident, n in sorted(counts.items()):
            if n > 1:
                add(entity, ident, "duplicate-id", f"{n} rows")
            if ident == "":
                add(entity, ident, "invalid-value", "empty identifier")

    customers = {c.customer_id for c in dataset.customers}
    places = {p.place_id for p in dataset.places}
    for c in dataset.customers:
        if not c.party_role_name:
            add("Customer", c.customer_id, "invalid-value", "empty partyRoleName")
    for p in dataset.places:
        if not p.geographic_area:
            add("Place", p.place_id, "invalid-value", "empty geographicArea")

    def check_order(entity: str, ident: str, o: Any) -> None:
        if not o.chain_id:
            add(entity, ident, "invalid-value", "empty chainId")
        if o.rework_no < 0:
            add(entity, ident, "invalid-value", "negative reworkNo")
        if o.interaction_date_complete is not None and o.interaction_date_complete < o.interaction_date:
            add(entity, ident, "temporal-order", "interactionDateComplete before interactionDate")
        if o.delivery_date is not None and o.delivery_date < o.interaction_date:
            add(entity, ident, "temporal-order", "deliveryDate before interactionDate")

    co_by_chain: dict[str, CustomerOrder] = {}
    chain_counts: Counter = Counter()
    for o in dataset.customer_orders:
        check_order("CustomerOrder", o.customer_order_id, o)
        if o.customer_ref not in customers:
            add("CustomerOrder", o.customer_order_id, "dangling-reference", f"customerRef {o.customer_ref!r}")
        if o.place_ref not in places:
            add("CustomerOrder", o.customer_order_id, "dangling-reference", f"placeRef {o.place_ref!r}")
        chain_counts[o.chain_id] += 1
        co_by_chain.setdefault(o.chain_id, o)
    for chain, n in sorted(chain_counts.items()):
        if n > 1 and chain:
            add("CustomerOrder", chain, "duplicate-chain", f"{n} customer orders")

    def per_chain(entity: str, rows: Iterable[Any], key_attr: str) -> dict[str, Any]:
        first: dict[str, Any] = {}
        counts: Counter = Counter()
        for r in rows:
            ident = getattr(r, key_attr)
            if r.chain_id not in co_by_chain:
                add(entity, ident, "orphan-chain", f"chainId {r.chain_id!r}")
            counts[r.chain_id] += 1
            first.setdefault(r.chain_id, r)
        for chain, n in sorted(counts.items()):
            if n > 1:
                add(entity, chain, "duplicate-chain", f"{n} rows")
        return first

    for o in dataset.service_orders:
        check_order("ServiceOrder", o.service_order_id, o)
    for o in dataset.resource_orders:
        check_order("ResourceOrder", o.resource_order_id, o)
    so_by_chain = per_chain("ServiceOrder", dataset.service_orders, "service_order_id")
    ro_by_chain = per_chain("ResourceOrder", dataset.resource_orders, "resource_order_id")
    per_chain("CustomerFacingService", dataset.cfs, "cfs_id")

    for s in dataset.cfs:
        if s.cfs_status not in CFS_STATUS_CODES:
            add("CustomerFacingService", s.cfs_id, "invalid-value", f"cfsStatus {s.cfs_status}")

    for p in dataset.service_problems:
        if p.chain_id not in co_by_chain:
            add("ServiceProblem", p.service_problem_id, "orphan-chain", f"chainId {p.chain_id!r}")
        if p.reason not in PROBLEM_REASONS:
            add("ServiceProblem", p.service_problem_id, "invalid-value", f"reason {p.reason!r}")
        if p.first_alert not in FIRST_ALERTS:
            add("ServiceProblem", p.service_problem_id, "invalid-value", f"firstAlert {p.first_alert!r}")

    for t in dataset.trouble_tickets:
        tid = t.trouble_ticket_id
        if t.linked_order_kind not in LINKED_ORDER_KINDS:
            add("TroubleTicket", tid, "invalid-value", f"linkedOrderKind {t.linked_order_kind!r}")
        elif t.chain_id not in co_by_chain or (
            t.linked_order_kind == LINKED_SERVICE_ORDER and t.chain_id not in so_by_chain
        ):
            add("TroubleTicket", tid, "orphan-chain", f"no {t.linked_order_kind} on chain {t.chain_id!r}")
        if t.trouble_ticket_state not in TICKET_STATES:
            add("TroubleTicket", tid, "invalid-value", f"troubleTicketState {t.trouble_ticket_state!r}")
        if t.service_restored_date is not None and t.service_restored_date < t.trouble_detection_date:
            add("TroubleTicket", tid, "temporal-order", "serviceRestoredDate before troubleDetectionDate")
        if t.interaction_date_complete is not None and t.interaction_date_complete < t.interaction_date:
            add("TroubleTicket", tid, "temporal-order", "interactionDateComplete before interactionDate")

    for q in dataset.customer_inquiries:
        if q.customer_ref not in customers:
            add("CustomerInquiry", q.customer_inquiry_id, "dangling-reference", f"customerRef {q.customer_ref!r}")
        if q.chain_id is not None and q.chain_id not in co_by_chain:
            add("CustomerInquiry", q.customer_inquiry_id, "orphan-chain", f"chainId {q.chain_id!r}")
        if q.inquiry_type not in INQUIRY_TYPES:
            add("CustomerInquiry", q.customer_inquiry_id, "invalid-value", f"inquiryType {q.inquiry_type!r}")

    # lifecycles nest: CO start <= SO start <= RO start, RO done <= SO done <= CO done
    for chain in sorted(co_by_chain):
        co, so, ro = co_by_chain[chain], so_by_chain.get(chain), ro_by_chain.get(chain)
        steps = []
        if so is not None:
            steps.append(("CO start", co.interaction_date, "SO start", so.interaction_date))
            if so.interaction_date_complete and co.interaction_date_complete:
                steps.append(("SO complete", so.interaction_date_complete, "CO complete", co.interaction_date_complete))
            if ro is not None:
                steps.append(("SO start", so.interaction_date, "RO start", ro.interaction_date))
                if ro.interaction_date_complete and so.interaction_date_complete:
                    steps.append(("RO complete", ro.interaction_date_complete, "SO complete", so.interaction_date_complete))
        for a_name, a, b_name, b in steps:
            if b < a:
                add("chain", chain, "chain-nesting", f"{b_name} before {a_name}")

    return ValidationReport(tuple(out))
