import dataclasses
from collections import Counter
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import at, chain, dataset, tree_digest
from otpmart import datagen, etl
from otpmart import mart_schema as ms
from otpmart import source_model as sm
from otpmart.tables import SECONDS_PER_DAY

DAY = SECONDS_PER_DAY


def test_associations_empty():
    assoc = etl.derive_associations(sm.SourceDataset())
    assert assoc.business_interaction_role == () and assoc.involves_party_role == ()


def test_associations_single_order():
    ds = dataset(chain(1))
    assoc = etl.derive_associations(ds)
    assert len(assoc.business_interaction_role) == 1 and len(assoc.involves_party_role) == 1
    assert etl.join_order_customers(ds.customer_orders, assoc) == {"CO1": "C1"}


def test_association_join_equals_direct_refs():
    ds = datagen.generate(datagen.GenConfig(seed=3, order_count=100))
    joined = etl.join_order_customers(ds.customer_orders, etl.derive_associations(ds))
    assert joined == {o.customer_order_id: o.customer_ref for o in ds.customer_orders}


def test_one_day_dataset_has_one_time_row():
    day = at(14)
    points = (day,) * 6
    dims = etl.build_dimensions(dataset(chain(1, points, due=day)))
    assert [(d.time_key, d.day, d.month, d.year) for d in dims.dim_time] == [(20240115, 15, 1, 2024)]


def test_two_customers_keys_in_natural_order():
    dims = etl.build_dimensions(dataset(customers=(("Cb", "x"), ("Ca", "y"))))
    assert [(d.customer_key, d.customer_id) for d in dims.dim_customer] == [(1, "Ca"), (2, "Cb")]


def test_dimension_counts_equal_distinct_source_values(seed42, mart42):
    assert len(mart42.dim_customer) == len({c.customer_id for c in seed42.customers})
    assert len(mart42.dim_place) == len({p.place_id for p in seed42.places})
    assert len(mart42.dim_service) == len({s.cfs_id for s in seed42.cfs})
    assert len(mart42.dim_service_problem) == len({p.service_problem_id for p in seed42.service_problems})
    dates = set()
    for name, (spec, _, _) in sm.SOURCE_TABLES.items():
        for row in getattr(seed42, name):
            for c in spec.columns:
                if c.kind in ("ts", "opt_ts") and getattr(row, c.attr) is not None:
                    dates.add(getattr(row, c.attr).date())
    assert len(mart42.dim_time) == len(dates)


def test_order_duration_three_and_a_half_days():
    points = (at(0), at(0.5), at(1), at(2), at(2.5), at(3, 12))
    (row,) = etl.transform_order_facts(dataset(chain(1, points)))
    assert row.order_duration_s == 3.5 * DAY
    assert ms.FACTS["fact_fce2abc"].table.format_row(row)[5] == "3.500000"


def test_delivery_on_due_date_is_on_time():
    points = (at(0), at(0.5), at(1), at(2), at(2.5), at(3))
    (row,) = etl.transform_order_facts(dataset(chain(1, points, due=at(2.5))))
    assert row.on_time_flag == 1
    (late,) = etl.transform_order_facts(dataset(chain(1, points, due=at(2.5) - (at(0, 1) - at(0)))))
    assert late.on_time_flag == 0


def test_open_order_has_no_duration():
    points = (at(0), at(0.5), at(1), None, None, None)
    (row,) = etl.transform_order_facts(dataset(chain(1, points)))
    assert row.order_duration_s is None and row.completed_flag == 0
    assert row.completion_time_key == 0 and row.delivered_flag == 0 and row.on_time_flag is None


def test_degenerate_chain_has_zero_blocks():
    foe2a, foe2b = etl.transform_meta_process_facts(dataset(chain(1, (at(0),) * 6)))
    assert (foe2a[0].mp1_s, foe2a[0].mp5_s, foe2a[0].total_s) == (0, 0, 0)
    assert [r.duration_s for r in foe2b] == [0] * 5


def test_meta_process_blocks():
    points = (at(0), at(0.5), at(1), at(2), at(2.5), at(3))
    foe2a, foe2b = etl.transform_meta_process_facts(dataset(chain(1, points)))
    (row,) = foe2a
    days = [s / DAY for s in (row.mp1_s, row.mp2_s, row.mp3_s, row.mp4_s, row.mp5_s)]
    assert days == [0.5, 0.5, 1, 0.5, 0.5]
    assert row.total_s == 3 * DAY
    assert [(r.block_id, r.duration_s / DAY) for r in foe2b] == list(enumerate(days, 1))


def test_resolution_one_and_a_quarter_days():
    ticket = sm.TroubleTicket("TT1", "BI1", sm.LINKED_SERVICE_ORDER, "Resolved", at(0), at(1, 6), at(0), at(1, 6))
    rows = etl.transform_remaining_facts(dataset(chain(1), ticket))["fact_foe3b"]
    assert [r.resolution_s / DAY for r in rows] == [1.25]


@pytest.mark.parametrize("offset,flag", [(28 * DAY, 1), (28 * DAY + 1, 0), (0, 1), (-1, 0)])
def test_early_fault_window_boundaries(offset, flag):
    rows = chain(1)
    delivered = rows[0].delivery_date
    raised = delivered + timedelta(seconds=offset)
    problem = sm.ServiceProblem("SP1", "BI1", "NMS", "equipment fault", "network monitoring", raised)
    (fact,) = etl.transform_remaining_facts(dataset(rows, problem))["fact_fce4b"]
    assert fact.early_fault_flag == flag


def test_rework_flags_match_source(seed42, mart42):
    assert sum(r.rework_flag for r in mart42.fact_foe3a) == sum(o.rework_no > 0 for o in seed42.service_orders)


def test_row_conservation(seed42, mart42):
    assert len(mart42.fact_fce2abc) == len(seed42.customer_orders) == 1000
    assert len(mart42.fact_foe2b) == 5 * len(mart42.fact_foe2a)
    complete = sum(
        o.interaction_date_complete is not None for o in seed42.customer_orders
    )
    assert len(mart42.fact_foe2a) == complete
    kinds = Counter(t.linked_order_kind for t in seed42.trouble_tickets)
    assert len(mart42.fact_foe3d) == kinds[sm.LINKED_CUSTOMER_ORDER]
    assert len(mart42.fact_foe3b) == kinds[sm.LINKED_SERVICE_ORDER]


def test_join_path_attribution_matches_direct_ref(seed42, mart42):
    keys = {d.customer_id: d.customer_key for d in mart42.dim_customer}
    direct = {o.customer_order_id: keys[o.customer_ref] for o in seed42.customer_orders}
    assert {r.customer_order_id: r.customer_key for r in mart42.fact_fce2abc} == direct


def test_activation_failure_needs_customer_reported_problem():
    failed = chain(1, status=sm.CFS_FAILED)
    unconfirmed = chain(2, status=sm.CFS_FAILED)
    confirmed = sm.ServiceProblem("SP1", "BI1", "CRM", sm.ACTIVATION_FAILURE, sm.CUSTOMER_REPORT, at(4))
    other_alert = sm.ServiceProblem("SP2", "BI2", "NMS", sm.ACTIVATION_FAILURE, "network monitoring", at(4))
    rows = etl.transform_remaining_facts(dataset(failed, unconfirmed, confirmed, other_alert))["fact_fce4"]
    flags = {r.service_key: (r.failed_flag, r.delivered_flag, r.time_key) for r in rows}
    assert flags == {1: (1, 0, 20240105), 2: (0, 0, 20240103)}


def test_parallel_and_serial_builds_agree(seed42):
    assert etl.build_mart(seed42, parallel=True) == etl.build_mart(seed42)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(0, 40))
def test_durations_never_negative(seed, n):
    mart = etl.build_mart(datagen.generate(datagen.GenConfig(seed=seed, order_count=n)))
    for row in mart.fact_foe2a:
        assert min(row.mp1_s, row.mp2_s, row.mp3_s, row.mp4_s, row.mp5_s) >= 0
    assert all(r.resolution_s is None or r.resolution_s >= 0 for r in mart.fact_foe3b)
    assert all(r.order_duration_s is None or r.order_duration_s >= 0 for r in mart.fact_fce2abc)
    assert ms.foreign_key_problems(mart) == []


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(0, 40), shuffle_seed=st.randoms(use_true_random=False))
def test_input_row_order_does_not_matter(seed, n, shuffle_seed):
    ds = datagen.generate(datagen.GenConfig(seed=seed, order_count=n))
    shuffled = sm.SourceDataset(
        **{f.name: tuple(shuffle_seed.sample(getattr(ds, f.name), len(getattr(ds, f.name)))) for f in dataclasses.fields(ds)}
    )
    assert etl.build_mart(shuffled) == etl.build_mart(ds)


def test_pipeline_empty_source(tmp_path):
    datagen.write_source(sm.SourceDataset(), tmp_path / "src")
    mart, summary = etl.run_pipeline(etl.PipelineConfig(tmp_path / "src", tmp_path / "mart"))
    assert mart == ms.MartSnapshot()
    assert set(summary.rows_read.values()) == {0} and set(summary.rows_written.values()) == {0}
    assert (tmp_path / "mart" / etl.SUMMARY_FILE).read_text() == summary.render()


def test_pipeline_twice_identical(tmp_path, seed42):
    datagen.write_source(seed42, tmp_path / "src")
    for out in ("m1", "m2"):
        etl.run_pipeline(etl.PipelineConfig(tmp_path / "src", tmp_path / out))
    assert tree_digest(tmp_path / "m1") == tree_digest(tmp_path / "m2")
    counts = (tmp_path / "m1" / "fact_fce2abc.csv").read_text().count("\n") - 1
    assert counts == 1000


def test_pipeline_refuses_invalid_source(tmp_path):
    rows = chain(1)
    rows[0] = dataclasses.replace(rows[0], interaction_date_complete=at(-1))
    datagen.write_source(dataset(rows), tmp_path / "src")
    with pytest.raises(etl.ValidationFailed) as err:
        etl.run_pipeline(etl.PipelineConfig(tmp_path / "src", tmp_path / "mart"))
    assert "temporal-order" in {v.rule for v in err.value.report}
    assert not (tmp_path / "mart").exists()


def test_pipeline_paths_must_differ(tmp_path):
    with pytest.raises(ValueError):
        etl.PipelineConfig(tmp_path, tmp_path)
