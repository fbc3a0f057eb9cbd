"""Brute-force metric evaluation straight from source rows.

This path never touches the mart: every metric is recomputed by scanning
the source entities with plain datetime arithmetic, so agreement with
:func:`otpmart.kpi.evaluate` checks the whole ETL + evaluator chain.
"""

from __future__ import annotations

from datetime import datetime, timedelta
from typing import Iterator, Mapping

from . import source_model as sm
from .kpi import MetricResult, ReportingPeriod, check_filters, get_metric, result_from_cells
from .mart_schema import UNKNOWN_LABEL

_EARLY_WINDOW = timedelta(days=28)


def _secs(later: datetime, earlier: datetime) -> int:
    return int((later - earlier).total_seconds())


class _Scan:
    def __init__(self, ds: sm.SourceDataset):
        self.ds = ds
        self.segment = {c.customer_id: c.party_role_name for c in ds.customers}
        self.area = {p.place_id: p.geographic_area for p in ds.places}
        self.co = {o.chain_id: o for o in ds.customer_orders}
        self.so = {o.chain_id: o for o in ds.service_orders}
        self.ro = {o.chain_id: o for o in ds.resource_orders}
        self.cfs = {s.chain_id: s for s in ds.cfs}
        self.problems: dict[str, list[sm.ServiceProblem]] = {}
        for p in ds.service_problems:
            self.problems.setdefault(p.chain_id, []).append(p)

    def customer_of_chain(self, chain: str) -> str:
        co = self.co.get(chain)
        return self.segment.get(co.customer_ref, UNKNOWN_LABEL) if co else UNKNOWN_LABEL

    def component(self, chain: str | None) -> str:
        s = self.cfs.get(chain) if chain else None
        return s.service_component if s else UNKNOWN_LABEL

    def first_problem(self, chain: str) -> sm.ServiceProblem | None:
        found = self.problems.get(chain)
        if not found:
            return None
        return min(found, key=lambda p: (p.time_raised, p.service_problem_id))

    def origin(self, chain: str) -> str:
        p = self.first_problem(chain)
        return p.originating_system if p else UNKNOWN_LABEL


# Each observation: (anchor timestamp, attribute values, block, denominator 0/1, numerator)
Observation = tuple[datetime, dict[str, str], "int | None", int, int]


def _observe(scan: _Scan, metric_id: str) -> Iterator[Observation]:
    ds = scan.ds
    if metric_id in ("F-CE-2a", "F-CE-2b", "F-CE-2c"):
        for co in ds.customer_orders:
            attrs = {"partyRoleName": scan.segment.get(co.customer_ref, UNKNOWN_LABEL)}
            if metric_id == "F-CE-2a" and co.interaction_date_complete:
                yield co.interaction_date_complete, attrs, None, 1, _secs(co.interaction_date_complete, co.interaction_date)
            elif metric_id == "F-CE-2b":
                delay = _secs(co.due_date, co.customer_required_date)
                yield co.due_date, attrs, None, 1, delay if co.due_date > co.customer_required_date else 0
            elif metric_id == "F-CE-2c" and co.delivery_date:
                yield co.delivery_date, attrs, None, 1, int(co.due_date - co.delivery_date >= timedelta(0))
    elif metric_id == "F-CE-3":
        for q in ds.customer_inquiries:
            if q.inquiry_type == sm.USABILITY_INQUIRY:
                attrs = {
                    "partyRoleName": scan.segment.get(q.customer_ref, UNKNOWN_LABEL),
                    "serviceComponent": scan.component(q.chain_id),
                }
                yield q.interaction_date, attrs, None, 0, 1
        for s in ds.cfs:
            so = scan.so.get(s.chain_id)
            if s.cfs_status == 0 and so and so.interaction_date_complete:
                attrs = {"partyRoleName": scan.customer_of_chain(s.chain_id), "serviceComponent": s.service_component}
                yield so.interaction_date_complete, attrs, None, 1, 0
    elif metric_id == "F-CE-4":
        for s in ds.cfs:
            confirmed = sorted(
                (p.time_raised, p.service_problem_id)
                for p in scan.problems.get(s.chain_id, [])
                if p.reason == sm.ACTIVATION_FAILURE and p.first_alert == sm.CUSTOMER_REPORT
            )
            failed = s.cfs_status == 6 and bool(confirmed)
            if failed:
                anchor = confirmed[0][0]
            else:
                so = scan.so.get(s.chain_id)
                anchor = so.interaction_date_complete if so else None
            if anchor is None:
                continue
            attrs = {"partyRoleName": scan.customer_of_chain(s.chain_id), "serviceComponent": s.service_component}
            yield anchor, attrs, None, int(s.cfs_status == 0), int(failed)
    elif metric_id == "F-CE-4b":
        for co in ds.customer_orders:
            if not co.interaction_date_complete:
                continue
            faulty = co.delivery_date is not None and any(
                co.delivery_date <= p.time_raised <= co.delivery_date + _EARLY_WINDOW
                for p in scan.problems.get(co.chain_id, [])
            )
            attrs = {
                "partyRoleName": scan.segment.get(co.customer_ref, UNKNOWN_LABEL),
                "serviceComponent": scan.component(co.chain_id),
            }
            yield co.interaction_date_complete, attrs, None, 1, int(faulty)
    elif metric_id in ("F-OE-2a", "F-OE-2b"):
        for co in ds.customer_orders:
            so, ro = scan.so.get(co.chain_id), scan.ro.get(co.chain_id)
            if not (so and ro and co.interaction_date_complete and so.interaction_date_complete
                    and ro.interaction_date_complete):
                continue
            if metric_id == "F-OE-2a":
                attrs = {"geographicArea": scan.area.get(co.place_ref, UNKNOWN_LABEL)}
                # whole-chain span; equals the five blocks by telescoping
                yield co.interaction_date_complete, attrs, None, 1, _secs(co.interaction_date_complete, co.interaction_date)
                continue
            attrs = {"partyRoleName": scan.segment.get(co.customer_ref, UNKNOWN_LABEL)}
            points = [
                co.interaction_date, so.interaction_date, ro.interaction_date,
                ro.interaction_date_complete, so.interaction_date_complete, co.interaction_date_complete,
            ]
            for block in range(1, 6):
                yield co.interaction_date_complete, attrs, block, 1, _secs(points[block], points[block - 1])
    elif metric_id == "F-OE-3a":
        for so in ds.service_orders:
            if so.interaction_date_complete:
                attrs = {"originatingSystem": scan.origin(so.chain_id), "serviceComponent": scan.component(so.chain_id)}
                yield so.interaction_date_complete, attrs, None, 1, int(so.rework_no > 0)
    elif metric_id in ("F-OE-3b", "F-OE-3d"):
        for t in ds.trouble_tickets:
            attrs = {
                "partyRoleName": scan.customer_of_chain(t.chain_id),
                "serviceComponent": scan.component(t.chain_id),
                "originatingSystem": scan.origin(t.chain_id),
            }
            if metric_id == "F-OE-3b" and t.linked_order_kind == sm.LINKED_SERVICE_ORDER and t.service_restored_date:
                yield t.service_restored_date, attrs, None, 1, _secs(t.service_restored_date, t.trouble_detection_date)
            elif metric_id == "F-OE-3d" and t.linked_order_kind == sm.LINKED_CUSTOMER_ORDER:
                yield t.trouble_detection_date, attrs, None, 1, int(t.trouble_ticket_state == sm.TICKET_PENDING)
    else:
        raise AssertionError(metric_id)


def oracle_evaluate(
    source: sm.SourceDataset,
    metric_id: str,
    period: ReportingPeriod,
    filters: Mapping[str, str] | None = None,
) -> MetricResult:
    """Same contract as :func:`otpmart.kpi.evaluate`, computed from source rows."""
    mdef = get_metric(metric_id)
    filters = dict(filters or {})
    check_filters(mdef, filters)
    cells: dict[int | None, list[int]] = {}
    for anchor, attrs, block, den, num in _observe(_Scan(source), metric_id):
        if not period.contains(anchor):
            continue
        if any(attrs.get(k) != str(v) for k, v in filters.items()):
            continue
        cell = cells.setdefault(block, [0, 0])
        cell[0] += num
        cell[1] += den
    return result_from_cells(mdef, cells, period, filters)
