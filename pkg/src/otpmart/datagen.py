"""Deterministic synthetic Order-to-Payment source data.

Randomness comes from one SplitMix64 stream seeded with ``GenConfig.seed``.
The derivations and the order in which entities consume the stream are
documented in ``docs/DATAGEN.md``; keep both in sync when editing
:func:`generate`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Mapping, Sequence

from . import source_model as sm
from .tables import parse_timestamp

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1

HOUR = 3600
DAY = 86400

GEOGRAPHIC_AREAS = ("central", "east", "north", "south", "west")
SERVICE_COMPONENTS = ("broadband", "iptv", "mobile", "voice")
ORIGINATING_SYSTEMS = ("CRM", "NMS", "OSS")
FAULT_REASONS = tuple(r for r in sm.PROBLEM_REASONS if r != sm.ACTIVATION_FAILURE)

# (low, high) inclusive bounds in seconds for each lifecycle step
CO_TO_SO_START = (1 * HOUR, 2 * DAY)
SO_TO_RO_START = (1 * HOUR, 1 * DAY)
RO_DURATION = (4 * HOUR, 5 * DAY)
RO_TO_SO_COMPLETE = (1 * HOUR, 1 * DAY)
SO_TO_CO_COMPLETE = (1 * HOUR, 2 * DAY)
REQUIRED_AFTER_START = (3 * DAY, 10 * DAY)
COMMIT_SHIFT = (1 * HOUR, 5 * DAY)
EARLY_FAULT_WINDOW = 28 * DAY
LATE_FAULT_WINDOW = (28 * DAY + 1, 60 * DAY)
DISTRACTOR_PROBLEM_RATE = 0.05
OTHER_INQUIRY_RATE = 0.1


class SplitMix64:
    """SplitMix64 (Steele, Lea & Flood 2014) with the derivations we rely on."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, low: int, high: int) -> int:
        """Integer in [low, high]: ``low + u64 mod (high - low + 1)``."""
        return low + self.next_u64() % (high - low + 1)

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def choice(self, seq: Sequence):
        return seq[self.randint(0, len(seq) - 1)]

    def weighted(self, items: Sequence[tuple[str, float]]) -> str:
        target = self.uniform() * sum(w for _, w in items)
        acc = 0.0
        for label, weight in items:
            acc += weight
            if target < acc:
                return label
        return items[-1][0]


class ConfigError(ValueError):
    pass


_EPOCH_2024 = datetime(2024, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    order_count: int = 1000
    period_start: datetime = _EPOCH_2024
    period_end: datetime = datetime(2025, 1, 1, tzinfo=timezone.utc)
    segment_weights: tuple[tuple[str, float], ...] = (
        ("consumer", 6.0),
        ("smallenterprise", 3.0),
        ("largeenterprise", 1.0),
    )
    failure_rate: float = 0.05
    rework_rate: float = 0.15
    usability_inquiry_rate: float = 0.1
    early_fault_rate: float = 0.05
    pending_ticket_rate: float = 0.3
    ticket_rate: float = 0.2
    open_rate: float = 0.05
    customer_count: int = 50
    place_count: int = 10

    def __post_init__(self) -> None:
        if isinstance(self.segment_weights, Mapping):
            object.__setattr__(self, "segment_weights", tuple(self.segment_weights.items()))
        if self.order_count < 0:
            raise ConfigError("order_count must be non-negative")
        if self.customer_count < 1 or self.place_count < 1:
            raise ConfigError("customer_count and place_count must be positive")
        if not self.period_start < self.period_end:
            raise ConfigError("period_start must be before period_end")
        if not self.segment_weights:
            raise ConfigError("segment_weights must not be empty")
        for label, weight in self.segment_weights:
            if not label or not weight > 0:
                raise ConfigError(f"segment weight for {label!r} must be positive")
        for name in (
            "failure_rate",
            "rework_rate",
            "usability_inquiry_rate",
            "early_fault_rate",
            "pending_ticket_rate",
            "ticket_rate",
            "open_rate",
        ):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name}={p} is not a probability")

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> GenConfig:
        """Build from string values as found in a key=value file."""
        known = {f.name: f for f in fields(cls)}
        kwargs: dict = {}
        for key, text in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                if key in ("period_start", "period_end"):
                    kwargs[key] = parse_timestamp(text)
                elif key == "segment_weights":
                    pairs = []
                    for part in text.split(","):
                        label, _, weight = part.partition(":")
                        pairs.append((label.strip(), float(weight)))
                    kwargs[key] = tuple(pairs)
                elif known[key].type == "int":
                    kwargs[key] = int(text)
                else:
                    kwargs[key] = float(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        return cls(**kwargs)


def read_key_values(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment line."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path) -> GenConfig:
    return GenConfig.from_mapping(read_key_values(path))


def generate(config: GenConfig) -> sm.SourceDataset:
    rng = SplitMix64(config.seed)
    places = [
        sm.Place(f"P{j:04d}", GEOGRAPHIC_AREAS[j % len(GEOGRAPHIC_AREAS)])
        for j in range(1, config.place_count + 1)
    ]
    customers = [
        sm.Customer(f"C{j:05d}", rng.weighted(config.segment_weights))
        for j in range(1, config.customer_count + 1)
    ]

    span = int((config.period_end - config.period_start).total_seconds())
    orders: list[sm.CustomerOrder] = []
    service_orders: list[sm.ServiceOrder] = []
    resource_orders: list[sm.ResourceOrder] = []
    services: list[sm.CustomerFacingService] = []
    problems: list[sm.ServiceProblem] = []
    tickets: list[sm.TroubleTicket] = []
    inquiries: list[sm.CustomerInquiry] = []

    def at(base: datetime, seconds: int) -> datetime:
        return base + timedelta(seconds=seconds)

    def add_problem(chain, reason, alert, raised):
        problems.append(
            sm.ServiceProblem(
                f"SP{len(problems) + 1:07d}", chain, rng.choice(ORIGINATING_SYSTEMS), reason, alert, raised
            )
        )

    for i in range(1, config.order_count + 1):
        chain = f"BI{i:07d}"
        customer = customers[rng.randint(0, len(customers) - 1)]
        place = places[rng.randint(0, len(places) - 1)]

        co_start = at(config.period_start, rng.randint(0, span - 1))
        so_start = at(co_start, rng.randint(*CO_TO_SO_START))
        ro_start = at(so_start, rng.randint(*SO_TO_RO_START))
        ro_length = rng.randint(*RO_DURATION)
        ro_done = at(ro_start, ro_length)
        so_done = at(ro_done, rng.randint(*RO_TO_SO_COMPLETE))
        co_done = at(so_done, rng.randint(*SO_TO_CO_COMPLETE))
        is_open = rng.bernoulli(config.open_rate)
        open_depth = rng.randint(1, 3)
        if is_open:
            co_done = None
            if open_depth >= 2:
                so_done = None
            if open_depth == 3:
                ro_done = None

        required = at(co_start, rng.randint(*REQUIRED_AFTER_START))
        commit_kind = rng.uniform()
        shift = rng.randint(*COMMIT_SHIFT)
        if commit_kind < 0.4:
            due = at(required, shift)
        elif commit_kind < 0.6:
            due = required
        else:
            due = at(required, -(shift % (2 * DAY)))

        rework = rng.randint(1, 3) if rng.bernoulli(config.rework_rate) else 0
        component = rng.choice(SERVICE_COMPONENTS)
        failed = rng.bernoulli(config.failure_rate)
        delivered = so_done

        orders.append(
            sm.CustomerOrder(
                f"CO{i:07d}", chain, customer.customer_id, place.place_id,
                co_start, co_done, delivered, due, required, rework,
            )
        )
        service_orders.append(
            sm.ServiceOrder(f"SO{i:07d}", chain, so_start, so_done, due, required, so_done, rework)
        )
        resource_orders.append(
            sm.ResourceOrder(f"RO{i:07d}", chain, ro_start, ro_done, due, required, ro_done, 0)
        )
        if failed:
            status = sm.CFS_FAILED
        elif so_done is not None:
            status = sm.CFS_DELIVERED
        else:
            status = 1
        active = status == sm.CFS_DELIVERED
        services.append(sm.CustomerFacingService(f"CFS{i:07d}", chain, component, status, active, active))

        if failed or rng.bernoulli(DISTRACTOR_PROBLEM_RATE):
            add_problem(chain, sm.ACTIVATION_FAILURE, sm.CUSTOMER_REPORT, at(ro_start, rng.randint(0, ro_length)))
        if rework:
            add_problem(chain, "configuration error", rng.choice(sm.FIRST_ALERTS), at(so_start, rng.randint(0, DAY)))
        if delivered is not None:
            if rng.bernoulli(config.early_fault_rate):
                offset = rng.randint(0, EARLY_FAULT_WINDOW)
                add_problem(chain, rng.choice(FAULT_REASONS), rng.choice(sm.FIRST_ALERTS), at(delivered, offset))
            elif rng.bernoulli(config.early_fault_rate / 2):
                offset = rng.randint(*LATE_FAULT_WINDOW)
                add_problem(chain, rng.choice(FAULT_REASONS), rng.choice(sm.FIRST_ALERTS), at(delivered, offset))

        so_window = int((so_done - so_start).total_seconds()) if so_done else 2 * DAY
        for _ in range(rework):
            detected = at(so_start, rng.randint(0, so_window))
            restored = at(detected, rng.randint(HOUR, 3 * DAY))
            if so_done is None and rng.bernoulli(0.5):
                restored = None
            tickets.append(
                sm.TroubleTicket(
                    f"TT{len(tickets) + 1:07d}", chain, sm.LINKED_SERVICE_ORDER,
                    "Resolved" if restored else "Open", detected, restored, detected, restored,
                )
            )
        if rng.bernoulli(config.ticket_rate):
            detected = at(co_start, rng.randint(0, 3 * DAY))
            if rng.bernoulli(config.pending_ticket_rate):
                state, restored = sm.TICKET_PENDING, None
            else:
                state = rng.choice(("Resolved", "Closed"))
                restored = at(detected, rng.randint(HOUR, 2 * DAY))
            tickets.append(
                sm.TroubleTicket(
                    f"TT{len(tickets) + 1:07d}", chain, sm.LINKED_CUSTOMER_ORDER,
                    state, detected, restored, detected, restored,
                )
            )

        if active and rng.bernoulli(config.usability_inquiry_rate):
            inquiries.append(
                sm.CustomerInquiry(
                    f"CI{len(inquiries) + 1:07d}", customer.customer_id, sm.USABILITY_INQUIRY,
                    at(delivered, rng.randint(0, 14 * DAY)), chain,
                )
            )
        if rng.bernoulli(OTHER_INQUIRY_RATE):
            inquiries.append(
                sm.CustomerInquiry(
                    f"CI{len(inquiries) + 1:07d}", customer.customer_id, "billing inquiry",
                    at(co_start, rng.randint(0, 20 * DAY)), None,
                )
            )

    return sm.SourceDataset(
        customers=tuple(customers),
        places=tuple(places),
        customer_orders=tuple(orders),
        service_orders=tuple(service_orders),
        resource_orders=tuple(resource_orders),
        cfs=tuple(services),
        service_problems=tuple(problems),
        trouble_tickets=tuple(tickets),
        customer_inquiries=tuple(inquiries),
    )


def write_source(dataset: sm.SourceDataset, directory: str | Path) -> dict[str, int]:
    """Write the nine source CSV files; returns ``{filename: row count}``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, (spec, _, _) in sm.SOURCE_TABLES.items():
        rows = getattr(dataset, name)
        spec.write(rows, directory)
        manifest[spec.filename] = len(rows)
    logger.info("wrote %d source rows to %s", sum(manifest.values()), directory)
    return manifest
