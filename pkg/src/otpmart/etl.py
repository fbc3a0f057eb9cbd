"""Extract-transform-load from a SourceDataset into a MartSnapshot.

Dimensions are loaded first (they are the join targets); the nine fact
transformations then read the immutable dataset independently and can run
on a thread pool. Row order is fixed by the snapshot, so parallel and serial
runs produce identical marts.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from . import mart_schema as ms
from . import source_model as sm
from .tables import SECONDS_PER_DAY, date_key, seconds_between, time_key

logger = logging.getLogger(__name__)

EARLY_FAULT_SECONDS = 28 * SECONDS_PER_DAY


@dataclass(frozen=True, slots=True)
class BusinessInteractionRole:
    role_id: str
    interaction_id: str


@dataclass(frozen=True, slots=True)
class RoleInvolvesPartyRole:
    role_id: str
    party_role_id: str


@dataclass(frozen=True)
class AssociationTables:
    business_interaction_role: tuple[BusinessInteractionRole, ...]
    involves_party_role: tuple[RoleInvolvesPartyRole, ...]


def derive_associations(dataset: sm.SourceDataset) -> AssociationTables:
    """One role per customer order: the chain interaction played by the ordering party."""
    roles, involvements = [], []
    for order in dataset.customer_orders:
        role_id = f"BIR-{order.customer_order_id}"
        roles.append(BusinessInteractionRole(role_id, order.chain_id))
        involvements.append(RoleInvolvesPartyRole(role_id, order.customer_ref))
    return AssociationTables(tuple(roles), tuple(involvements))


def join_order_customers(
    orders: tuple[sm.CustomerOrder, ...], assoc: AssociationTables
) -> dict[str, str]:
    """customerOrderId -> customerId through interaction -> role -> party role."""
    role_by_interaction = {r.interaction_id: r.role_id for r in assoc.business_interaction_role}
    party_by_role = {r.role_id: r.party_role_id for r in assoc.involves_party_role}
    out = {}
    for order in orders:
        role = role_by_interaction.get(order.chain_id)
        if role is not None and role in party_by_role:
            out[order.customer_order_id] = party_by_role[role]
    return out


@dataclass(frozen=True)
class Dimensions:
    dim_time: tuple[ms.DimTime, ...]
    dim_customer: tuple[ms.DimCustomer, ...]
    dim_place: tuple[ms.DimPlace, ...]
    dim_service: tuple[ms.DimService, ...]
    dim_service_problem: tuple[ms.DimServiceProblem, ...]


def _all_dates(dataset: sm.SourceDataset):
    for name, (spec, _, _) in sm.SOURCE_TABLES.items():
        ts_attrs = [c.attr for c in spec.columns if c.kind in ("ts", "opt_ts")]
        if not ts_attrs:
            continue
        for row in getattr(dataset, name):
            for attr in ts_attrs:
                ts = getattr(row, attr)
                if ts is not None:
                    yield ts.date()


def build_dimensions(dataset: sm.SourceDataset) -> Dimensions:
    days = sorted(set(_all_dates(dataset)))
    return Dimensions(
        dim_time=tuple(ms.DimTime(date_key(d), d.day, d.month, d.year) for d in days),
        dim_customer=tuple(
            ms.DimCustomer(k, c.customer_id, c.party_role_name)
            for k, c in enumerate(sorted(dataset.customers, key=lambda c: c.customer_id), 1)
        ),
        dim_place=tuple(
            ms.DimPlace(k, p.place_id, p.geographic_area)
            for k, p in enumerate(sorted(dataset.places, key=lambda p: p.place_id), 1)
        ),
        dim_service=tuple(
            ms.DimService(k, s.cfs_id, s.service_component, s.cfs_status)
            for k, s in enumerate(sorted(dataset.cfs, key=lambda s: s.cfs_id), 1)
        ),
        dim_service_problem=tuple(
            ms.DimServiceProblem(k, p.service_problem_id, p.originating_system, p.reason)
            for k, p in enumerate(sorted(dataset.service_problems, key=lambda p: p.service_problem_id), 1)
        ),
    )


class _Context:
    """Lookups shared by the fact transformations, built once per run."""

    def __init__(self, dataset: sm.SourceDataset, dims: Dimensions | None = None):
        dims = dims or build_dimensions(dataset)
        self.dataset = dataset
        self.customer_key = {d.customer_id: d.customer_key for d in dims.dim_customer}
        self.place_key = {d.place_id: d.place_key for d in dims.dim_place}
        self.service_key_by_id = {d.cfs_id: d.service_key for d in dims.dim_service}
        self.sp_key = {d.service_problem_id: d.sp_key for d in dims.dim_service_problem}
        self.co = {o.chain_id: o for o in dataset.customer_orders}
        self.so = {o.chain_id: o for o in dataset.service_orders}
        self.ro = {o.chain_id: o for o in dataset.resource_orders}
        self.cfs = {s.chain_id: s for s in dataset.cfs}
        self.problems: dict[str, list[sm.ServiceProblem]] = {}
        for p in sorted(dataset.service_problems, key=lambda p: (p.time_raised, p.service_problem_id)):
            self.problems.setdefault(p.chain_id, []).append(p)

    def chain_customer_key(self, chain: str) -> int:
        co = self.co.get(chain)
        return self.customer_key.get(co.customer_ref, 0) if co else ms.UNKNOWN_KEY

    def chain_service_key(self, chain: str | None) -> int:
        cfs = self.cfs.get(chain) if chain is not None else None
        return self.service_key_by_id[cfs.cfs_id] if cfs else ms.UNKNOWN_KEY

    def first_problem_key(self, chain: str) -> int:
        problems = self.problems.get(chain)
        return self.sp_key[problems[0].service_problem_id] if problems else ms.UNKNOWN_KEY


def _ctx(dataset: sm.SourceDataset, ctx: _Context | None) -> _Context:
    return ctx if ctx is not None else _Context(dataset)


def transform_order_facts(dataset: sm.SourceDataset, ctx: _Context | None = None) -> tuple[ms.OrderFulfillmentFact, ...]:
    ctx = _ctx(dataset, ctx)
    customers = join_order_customers(dataset.customer_orders, derive_associations(dataset))
    rows = []
    for o in dataset.customer_orders:
        done, delivered = o.interaction_date_complete, o.delivery_date
        rows.append(
            ms.OrderFulfillmentFact(
                customer_order_id=o.customer_order_id,
                customer_key=ctx.customer_key.get(customers.get(o.customer_order_id), ms.UNKNOWN_KEY),
                completion_time_key=time_key(done),
                due_time_key=time_key(o.due_date),
                delivery_time_key=time_key(delivered),
                order_duration_s=seconds_between(done, o.interaction_date) if done else None,
                order_delay_s=seconds_between(o.due_date, o.customer_required_date),
                # ties count as on time: dueDate - deliveryDate >= 0
                on_time_flag=int(delivered <= o.due_date) if delivered else None,
                completed_flag=int(done is not None),
                delivered_flag=int(delivered is not None),
            )
        )
    return tuple(rows)


def _meta_process_seconds(co, so, ro) -> tuple[int, int, int, int, int] | None:
    if so is None or ro is None:
        return None
    if None in (co.interaction_date_complete, so.interaction_date_complete, ro.interaction_date_complete):
        return None
    return (
        seconds_between(so.interaction_date, co.interaction_date),
        seconds_between(ro.interaction_date, so.interaction_date),
        seconds_between(ro.interaction_date_complete, ro.interaction_date),
        seconds_between(so.interaction_date_complete, ro.interaction_date_complete),
        seconds_between(co.interaction_date_complete, so.interaction_date_complete),
    )


def transform_meta_process_facts(
    dataset: sm.SourceDataset, ctx: _Context | None = None
) -> tuple[tuple[ms.OrderToActivationFact, ...], tuple[ms.ActivationByProcessFact, ...]]:
    ctx = _ctx(dataset, ctx)
    totals, blocks = [], []
    for co in dataset.customer_orders:
        mp = _meta_process_seconds(co, ctx.so.get(co.chain_id), ctx.ro.get(co.chain_id))
        if mp is None:
            continue
        customer_key = ctx.customer_key.get(co.customer_ref, ms.UNKNOWN_KEY)
        done_key = time_key(co.interaction_date_complete)
        totals.append(
            ms.OrderToActivationFact(
                co.chain_id, customer_key, ctx.place_key.get(co.place_ref, ms.UNKNOWN_KEY),
                done_key, *mp, sum(mp),
            )
        )
        blocks.extend(
            ms.ActivationByProcessFact(co.chain_id, customer_key, done_key, block, seconds)
            for block, seconds in enumerate(mp, 1)
        )
    return tuple(totals), tuple(blocks)


def _usability_facts(ctx: _Context) -> tuple[ms.UsabilityQueryFact, ...]:
    rows = []
    for q in ctx.dataset.customer_inquiries:
        if q.inquiry_type != sm.USABILITY_INQUIRY:
            continue
        rows.append(
            ms.UsabilityQueryFact(
                q.customer_inquiry_id, "inquiry", ctx.customer_key.get(q.customer_ref, ms.UNKNOWN_KEY),
                ctx.chain_service_key(q.chain_id), time_key(q.interaction_date),
            )
        )
    for s in ctx.dataset.cfs:
        if s.cfs_status != sm.CFS_DELIVERED:
            continue
        # activation date is the service order completion
        so = ctx.so.get(s.chain_id)
        rows.append(
            ms.UsabilityQueryFact(
                s.cfs_id, "activation", ctx.chain_customer_key(s.chain_id),
                ctx.service_key_by_id[s.cfs_id], time_key(so.interaction_date_complete if so else None),
            )
        )
    return tuple(rows)


def _activation_failure_facts(ctx: _Context) -> tuple[ms.ActivationFailureFact, ...]:
    rows = []
    for s in ctx.dataset.cfs:
        qualifying = [
            p for p in ctx.problems.get(s.chain_id, ())
            if p.reason == sm.ACTIVATION_FAILURE and p.first_alert == sm.CUSTOMER_REPORT
        ]
        problem = qualifying[0] if qualifying else None
        failed = s.cfs_status == sm.CFS_FAILED and problem is not None
        if failed:
            anchor = time_key(problem.time_raised)
        else:
            so = ctx.so.get(s.chain_id)
            anchor = time_key(so.interaction_date_complete if so else None)
        rows.append(
            ms.ActivationFailureFact(
                service_key=ctx.service_key_by_id[s.cfs_id],
                customer_key=ctx.chain_customer_key(s.chain_id),
                sp_key=ctx.sp_key[problem.service_problem_id] if problem else ms.UNKNOWN_KEY,
                time_key=anchor,
                failed_flag=int(failed),
                delivered_flag=int(s.cfs_status == sm.CFS_DELIVERED),
            )
        )
    return tuple(rows)


def _early_fault_facts(ctx: _Context) -> tuple[ms.EarlyLifeFaultFact, ...]:
    rows = []
    for o in ctx.dataset.customer_orders:
        flag = 0
        if o.delivery_date is not None:
            flag = int(any(
                0 <= seconds_between(p.time_raised, o.delivery_date) <= EARLY_FAULT_SECONDS
                for p in ctx.problems.get(o.chain_id, ())
            ))
        rows.append(
            ms.EarlyLifeFaultFact(
                o.customer_order_id, ctx.customer_key.get(o.customer_ref, ms.UNKNOWN_KEY),
                ctx.chain_service_key(o.chain_id), time_key(o.interaction_date_complete), flag,
            )
        )
    return tuple(rows)


def _rework_facts(ctx: _Context) -> tuple[ms.ReworkFact, ...]:
    return tuple(
        ms.ReworkFact(
            so.service_order_id, ctx.first_problem_key(so.chain_id), ctx.chain_service_key(so.chain_id),
            time_key(so.interaction_date_complete), int(so.rework_no > 0),
        )
        for so in ctx.dataset.service_orders
    )


def _rework_handling_facts(ctx: _Context) -> tuple[ms.ReworkHandlingFact, ...]:
    rows = []
    for t in ctx.dataset.trouble_tickets:
        if t.linked_order_kind != sm.LINKED_SERVICE_ORDER:
            continue
        restored = t.service_restored_date
        rows.append(
            ms.ReworkHandlingFact(
                t.trouble_ticket_id, ctx.chain_customer_key(t.chain_id), ctx.chain_service_key(t.chain_id),
                ctx.first_problem_key(t.chain_id), time_key(restored),
                seconds_between(restored, t.trouble_detection_date) if restored else None,
            )
        )
    return tuple(rows)


def _pending_fix_facts(ctx: _Context) -> tuple[ms.PendingErrorFixFact, ...]:
    return tuple(
        ms.PendingErrorFixFact(
            t.trouble_ticket_id, ctx.chain_customer_key(t.chain_id), ctx.chain_service_key(t.chain_id),
            time_key(t.trouble_detection_date), int(t.trouble_ticket_state == sm.TICKET_PENDING),
        )
        for t in ctx.dataset.trouble_tickets
        if t.linked_order_kind == sm.LINKED_CUSTOMER_ORDER
    )


def transform_remaining_facts(dataset: sm.SourceDataset, ctx: _Context | None = None) -> dict[str, tuple]:
    """Rows for fact_fce3, fce4, fce4b, foe3a, foe3b and foe3d keyed by table name."""
    ctx = _ctx(dataset, ctx)
    return {name: fn(ctx) for name, fn in _REMAINING.items()}


_REMAINING = {
    "fact_fce3": _usability_facts,
    "fact_fce4": _activation_failure_facts,
    "fact_fce4b": _early_fault_facts,
    "fact_foe3a": _rework_facts,
    "fact_foe3b": _rework_handling_facts,
    "fact_foe3d": _pending_fix_facts,
}


def build_mart(dataset: sm.SourceDataset, parallel: bool = False) -> ms.MartSnapshot:
    dims = build_dimensions(dataset)
    ctx = _Context(dataset, dims)
    jobs: dict[str, Any] = {
        "fact_fce2abc": lambda: transform_order_facts(dataset, ctx),
        "meta": lambda: transform_meta_process_facts(dataset, ctx),
        **{name: (lambda fn=fn: fn(ctx)) for name, fn in _REMAINING.items()},
    }
    if parallel:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            futures = {name: pool.submit(job) for name, job in jobs.items()}
            results = {name: f.result() for name, f in futures.items()}
    else:
        results = {name: job() for name, job in jobs.items()}
    foe2a, foe2b = results.pop("meta")
    return ms.MartSnapshot(
        **{f: getattr(dims, f) for f in Dimensions.__dataclass_fields__},
        fact_foe2a=foe2a,
        fact_foe2b=foe2b,
        **results,
    )


@dataclass(frozen=True)
class PipelineConfig:
    source_dir: Path
    mart_dir: Path
    parallel_facts: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_dir", Path(self.source_dir))
        object.__setattr__(self, "mart_dir", Path(self.mart_dir))
        if self.source_dir.resolve() == self.mart_dir.resolve():
            raise ValueError("source and mart directories must differ")


@dataclass(frozen=True)
class RunSummary:
    rows_read: dict[str, int]
    rows_written: dict[str, int]

    def render(self) -> str:
        lines = ["table,rows"]
        lines += [f"{name},{n}" for name, n in self.rows_read.items()]
        lines += [f"{name},{n}" for name, n in self.rows_written.items()]
        return "\n".join(lines) + "\n"


class ValidationFailed(Exception):
    def __init__(self, report: sm.ValidationReport):
        self.report = report
        super().__init__(f"{len(report)} validation violation(s)")


SUMMARY_FILE = "run_summary.txt"


def run_pipeline(config: PipelineConfig) -> tuple[ms.MartSnapshot, RunSummary]:
    """Load, validate, transform and write. Nothing is written if validation fails."""
    dataset = sm.load_source(config.source_dir)
    report = sm.validate(dataset)
    if not report.ok:
        raise ValidationFailed(report)
    mart = build_mart(dataset, parallel=config.parallel_facts)
    written = ms.write_mart(mart, config.mart_dir)
    summary = RunSummary(dataset.row_counts(), written)
    (config.mart_dir / SUMMARY_FILE).write_text(summary.render(), encoding="utf-8")
    logger.info("etl wrote %d rows to %s", sum(written.values()), config.mart_dir)
    return mart, summary
