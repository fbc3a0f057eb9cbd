"""Acceptance criteria, one marked group per criterion.

The terminal summary prints one PASS/FAIL line per criterion number.
"""

import time
from collections import Counter

import pytest

from conftest import at, chain, dataset, tree_digest
from otpmart import datagen, etl, kpi, olap, oracle, report
from otpmart import mart_schema as ms
from otpmart import source_model as sm
from otpmart.kpi import UNDEFINED, ReportingPeriod

IDS = [m.metric_id for m in kpi.list_metrics()]
YEAR = ReportingPeriod.parse("2024")
MONTH = ReportingPeriod.parse("2024-03")


def agree(a, b):
    for x, y in zip(kpi.as_values(a), kpi.as_values(b), strict=True):
        assert (x.block, x.denominator, x.numerator_seconds) == (y.block, y.denominator, y.numerator_seconds)
        if x.unit != "days":
            assert x.numerator == y.numerator
        if x.defined or y.defined:
            assert abs(x.value - y.value) <= 1e-9
        else:
            assert x.value is UNDEFINED and y.value is UNDEFINED


# 1 -------------------------------------------------------------------------

@pytest.mark.criterion(1, "percent-of-total on segment means 3.5 and 5 days")
def test_figure_arithmetic():
    a = chain(1, (at(0), at(0.5), at(1), at(2), at(2.5), at(3.5)), customer="C1")
    b = chain(2, (at(0), at(0.5), at(1), at(2), at(2.5), at(5)), customer="C2")
    src = dataset(a, b, customers=(("C1", "consumer"), ("C2", "largeenterprise")))
    rep = report.build_report(etl.build_mart(src), "F-CE-2a", ReportingPeriod.parse("2024-01"), "partyRoleName")
    got = {r.label: (r.value, r.percent) for r in rep.rows}
    assert got["consumer"][0] == 3.5 and got["largeenterprise"][0] == 5
    assert abs(got["consumer"][1] - 41.176) <= 0.001
    assert abs(got["largeenterprise"][1] - 58.824) <= 0.001
    assert "consumer,3.5,41.176\nlargeenterprise,5,58.824\n" in report.render_csv(rep)


@pytest.mark.criterion(1, "percent-of-total on segment means 3.5 and 5 days")
def test_figure_arithmetic_direct():
    rows = report.percent_of_total({"consumer": 3.5, "largeenterprise": 5.0})
    assert [r.percent for r in rows] == [41.176, 58.824]


# 2 -------------------------------------------------------------------------

@pytest.mark.criterion(2, "evaluate equals oracle_evaluate over the full grid in under 60 s")
def test_oracle_equivalence_grid():
    started = time.perf_counter()
    checked = Counter()
    for seed in (1, 7, 42):
        for orders in (10, 100, 1000):
            source = datagen.generate(datagen.GenConfig(seed=seed, order_count=orders))
            mart = etl.build_mart(source)
            for period in (MONTH, YEAR):
                for metric_id in IDS:
                    agree(kpi.evaluate(mart, metric_id, period), oracle.oracle_evaluate(source, metric_id, period))
                    checked["unfiltered"] += 1
                    for attr in kpi.get_metric(metric_id).allowed_filters:
                        for label in sorted(set(mart.attribute_lookup(attr).values())):
                            f = {attr: label}
                            agree(
                                kpi.evaluate(mart, metric_id, period, f),
                                oracle.oracle_evaluate(source, metric_id, period, f),
                            )
                            checked["filtered"] += 1
    elapsed = time.perf_counter() - started
    print(f"oracle grid: {checked['unfiltered']} unfiltered + {checked['filtered']} filtered in {elapsed:.2f}s")
    assert checked["unfiltered"] == 3 * 3 * 2 * 11
    assert elapsed < 60


# 3 -------------------------------------------------------------------------

@pytest.mark.criterion(3, "blocks telescope to CO completion minus CO start")
def test_telescoping_per_chain(seed42, mart42):
    cos = {o.chain_id: o for o in seed42.customer_orders}
    rows = mart42.rows("fact_foe2a")
    assert rows
    for row in rows:
        co = cos[row.chain_id]
        span = int((co.interaction_date_complete - co.interaction_date).total_seconds())
        blocks = (row.mp1_s, row.mp2_s, row.mp3_s, row.mp4_s, row.mp5_s)
        assert sum(blocks) == row.total_s == span


@pytest.mark.criterion(3, "blocks telescope to CO completion minus CO start")
@pytest.mark.parametrize("period", [YEAR] + YEAR.months(), ids=lambda p: p.label)
def test_telescoping_per_period(mart42, period):
    total = kpi.evaluate(mart42, "F-OE-2a", period)
    blocks = kpi.evaluate(mart42, "F-OE-2b", period)
    assert all(b.denominator == total.denominator for b in blocks)
    assert sum(b.numerator_seconds for b in blocks) == total.numerator_seconds


# 4 -------------------------------------------------------------------------

@pytest.mark.criterion(4, "on-time and late percentages add to 100")
@pytest.mark.parametrize("seed", [1, 7, 42])
def test_complement(seed):
    mart = etl.build_mart(datagen.generate(datagen.GenConfig(seed=seed, order_count=1000)))
    periods = [YEAR] + YEAR.months() + [ReportingPeriod.parse("2024-02-10..2024-02-11")]
    seen = 0
    for period in periods:
        v = kpi.evaluate(mart, "F-CE-2c", period)
        if v.denominator == 0:
            assert v.value is UNDEFINED
            continue
        late = 100.0 * (v.denominator - v.numerator) / v.denominator
        assert abs(v.value + late - 100) <= 1e-9
        seen += 1
    assert seen >= 12


# 5 -------------------------------------------------------------------------

def _sum_grids(grids):
    merged = {}
    for grid in grids:
        for key, values in grid.rows:
            acc = merged.setdefault(key, [0] * len(values))
            for i, v in enumerate(values):
                acc[i] += v
    return {k: tuple(v) for k, v in merged.items()}


def _time_key_headers(spec):
    return [c.header for c in spec.table.columns if c.attr in spec.time_keys]


@pytest.mark.criterion(5, "twelve month grids sum to the year grid (seed 42)")
@pytest.mark.parametrize("fact", sorted(ms.FACTS))
def test_rollup_additivity(mart42, fact):
    spec = ms.FACTS[fact]
    measures = tuple(olap.Measure("sum", m) for m in spec.measures) + (olap.Measure("count", olap.ROW_COUNT),)
    attrs = [a for a, (dim, _) in ms.ATTRIBUTES.items() if ms.dimension_fk(fact, dim)]
    for time_key in _time_key_headers(spec):
        for by in [()] + [(a,) for a in attrs]:
            def grid(level, label):
                return olap.run_query(mart42, olap.Query(fact, measures, by, ((level, label),), time_key=time_key))

            months = [grid("month", f"2024-{m:02d}") for m in range(1, 13)]
            assert _sum_grids(months) == dict(grid("year", "2024").rows)


@pytest.mark.criterion(5, "twelve month grids sum to the year grid (seed 42)")
@pytest.mark.parametrize("metric_id", IDS)
def test_metric_tallies_roll_up(mart42, metric_id):
    year = kpi.as_values(kpi.evaluate(mart42, metric_id, YEAR))
    months = [kpi.as_values(kpi.evaluate(mart42, metric_id, p)) for p in YEAR.months()]
    for i, whole in enumerate(year):
        assert sum(m[i].denominator for m in months) == whole.denominator
        if whole.unit == "days":
            assert sum(m[i].numerator_seconds for m in months) == whole.numerator_seconds
        else:
            assert sum(m[i].numerator for m in months) == whole.numerator


# 6 -------------------------------------------------------------------------

@pytest.mark.criterion(6, "generate, etl and report are byte-identical on rerun")
def test_determinism(tmp_path):
    cfg = datagen.GenConfig(seed=42, order_count=500)
    for run in ("a", "b"):
        datagen.write_source(datagen.generate(cfg), tmp_path / run / "source")
        mart, _ = etl.run_pipeline(etl.PipelineConfig(tmp_path / run / "source", tmp_path / run / "mart"))
        for metric_id, group_by in (("F-CE-2a", "partyRoleName"), ("F-OE-2a", "geographicArea")):
            rep = report.build_report(mart, metric_id, YEAR, group_by)
            for chart in report.CHART_KINDS:
                report.write_report(rep, tmp_path / run / "report", f"{metric_id}_{chart}", chart)
        rep = report.build_report(mart, "F-OE-2b", YEAR, report.BLOCK_AXIS)
        report.write_report(rep, tmp_path / run / "report", "blocks", "pie")
    for part in ("source", "mart", "report"):
        assert tree_digest(tmp_path / "a" / part) == tree_digest(tmp_path / "b" / part), part


@pytest.mark.criterion(6, "generate, etl and report are byte-identical on rerun")
def test_golden_source_checksum(tmp_path):
    datagen.write_source(datagen.generate(datagen.GenConfig(seed=42, order_count=100)), tmp_path)
    assert tree_digest(tmp_path) == "52a71b703a88a0031148f37811935a01fdf875fd8ca1b640ee4dc938728468ca"


# 7 -------------------------------------------------------------------------

@pytest.mark.criterion(7, "nine facts, five dimensions, documented headers, FK closure")
def test_schema_conformance(tmp_path, mart42):
    from test_mart_schema import documented_headers

    ms.write_mart(mart42, tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    dims = [f for f in files if f.startswith("dim_")]
    facts = [f for f in files if f.startswith("fact_")]
    assert (len(facts), len(dims), len(files)) == (9, 5, 14)
    docs = documented_headers()
    for name in files:
        assert tmp_path.joinpath(name).read_text().split("\n", 1)[0] == docs[name]
    assert ms.foreign_key_problems(mart42) == []
    assert ms.foreign_key_problems(ms.read_mart(tmp_path)) == []


# 8 -------------------------------------------------------------------------

@pytest.mark.criterion(8, "boundaries: due-day delivery, 28-day fault, empty denominators")
def test_delivery_on_due_date_is_on_time():
    on_due = chain(1, due=at(3), delivery=at(3))
    one_second_late = chain(2, due=at(3), delivery=at(3) + (at(0, 1 / 3600) - at(0)))
    src = dataset(on_due, one_second_late)
    period = ReportingPeriod.parse("2024-01")
    for result in (kpi.evaluate(etl.build_mart(src), "F-CE-2c", period), oracle.oracle_evaluate(src, "F-CE-2c", period)):
        assert (result.numerator, result.denominator, result.value) == (1, 2, 50.0)


@pytest.mark.criterion(8, "boundaries: due-day delivery, 28-day fault, empty denominators")
def test_fault_exactly_28_days_after_delivery_is_early():
    delivered = at(2.5)
    rows = []
    for n, offset in ((1, 28), (2, 28 + 1 / 86400)):
        rows += chain(n)
        rows.append(sm.ServiceProblem(f"SP{n}", f"BI{n}", "NMS", "equipment fault", "network monitoring", at(2.5 + offset)))
    src = dataset(*rows)
    assert src.customer_orders[0].delivery_date == delivered
    period = ReportingPeriod.parse("2024-01")
    for result in (kpi.evaluate(etl.build_mart(src), "F-CE-4b", period), oracle.oracle_evaluate(src, "F-CE-4b", period)):
        assert (result.numerator, result.denominator) == (1, 2)


@pytest.mark.criterion(8, "boundaries: due-day delivery, 28-day fault, empty denominators")
@pytest.mark.parametrize("metric_id", IDS)
def test_empty_denominator_is_undefined(mart42, seed42, metric_id):
    empty = ReportingPeriod.parse("2031")
    for result in (kpi.evaluate(mart42, metric_id, empty), oracle.oracle_evaluate(seed42, metric_id, empty)):
        for v in kpi.as_values(result):
            assert v.denominator == 0
            assert v.value is UNDEFINED and v.value != 0
            assert v.to_json()["value"] == "undefined"


# 9 -------------------------------------------------------------------------

@pytest.mark.criterion(9, "10,000-order pipeline with all KPIs for a year in under 10 s")
def test_desk_scale_pipeline(tmp_path):
    started = time.perf_counter()
    datagen.write_source(datagen.generate(datagen.GenConfig(seed=42, order_count=10_000)), tmp_path / "source")
    mart, summary = etl.run_pipeline(etl.PipelineConfig(tmp_path / "source", tmp_path / "mart"))
    results = {m: kpi.evaluate(mart, m, YEAR) for m in IDS}
    elapsed = time.perf_counter() - started
    print(f"10k pipeline: {elapsed:.2f}s")
    assert summary.rows_read["customer_orders.csv"] == 10_000
    assert all(any(v.defined for v in kpi.as_values(r)) for r in results.values())
    assert elapsed < 10
