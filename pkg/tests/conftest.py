from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from otpmart import datagen, etl
from otpmart import source_model as sm

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)


def at(days: float = 0, hours: float = 0, base: datetime = T0) -> datetime:
    return base + timedelta(days=days, hours=hours)


def chain(
    n: int,
    points: tuple[datetime, ...] | None = None,
    *,
    customer: str = "C1",
    place: str = "P1",
    due: datetime | None = None,
    required: datetime | None = None,
    delivery: datetime | None | str = "complete",
    status: int = sm.CFS_DELIVERED,
    component: str = "broadband",
    rework: int = 0,
    with_cfs: bool = True,
) -> list:
    """CO/SO/RO (+CFS) for one chain.

    ``points`` are CO start, SO start, RO start, RO complete, SO complete,
    CO complete; trailing completions may be None for an open chain.
    """
    if points is None:
        points = (at(0), at(0.5), at(1), at(2), at(2.5), at(3))
    co_s, so_s, ro_s, ro_c, so_c, co_c = points
    due = due or at(10)
    required = required or due
    if delivery == "complete":
        delivery = so_c
    bi = f"BI{n}"
    rows = [
        sm.CustomerOrder(f"CO{n}", bi, customer, place, co_s, co_c, delivery, due, required, rework),
        sm.ServiceOrder(f"SO{n}", bi, so_s, so_c, due, required, so_c, rework),
        sm.ResourceOrder(f"RO{n}", bi, ro_s, ro_c, due, required, ro_c, 0),
    ]
    if with_cfs:
        rows.append(sm.CustomerFacingService(f"CFS{n}", bi, component, status, status == 0, True))
    return rows


def dataset(*rows, customers=(("C1", "consumer"),), places=(("P1", "north"),)) -> sm.SourceDataset:
    """Assemble a SourceDataset from a flat mix of entity rows (lists are flattened)."""
    tables: dict[str, list] = {name: [] for name in sm.SOURCE_TABLES}
    by_type = {spec.row_type: name for name, (spec, _, _) in sm.SOURCE_TABLES.items()}
    flat = []
    for r in rows:
        flat.extend(r if isinstance(r, list) else [r])
    for r in flat:
        tables[by_type[type(r)]].append(r)
    tables["customers"] += [sm.Customer(c, seg) for c, seg in customers]
    tables["places"] += [sm.Place(p, area) for p, area in places]
    return sm.SourceDataset(**tables)


@pytest.fixture(scope="session")
def seed42():
    return datagen.generate(datagen.GenConfig(seed=42, order_count=1000))


@pytest.fixture(scope="session")
def mart42(seed42):
    return etl.build_mart(seed42)


# Acceptance criteria report: one PASS/FAIL line per criterion at the end of the run.
_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or rep.failed:
        number, title = marker.args
        entry = _CRITERIA.setdefault(number, [title, True])
        entry[1] = entry[1] and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}")


def tree_digest(directory) -> str:
    """sha256 over (name, bytes) of every file in a directory, in name order."""
    import hashlib
    from pathlib import Path

    h = hashlib.sha256()
    for p in sorted(Path(directory).iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()
