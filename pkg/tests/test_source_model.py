import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import at, chain, dataset
from otpmart import datagen
from otpmart import source_model as sm


def write_headers(directory):
    for spec, _, _ in sm.SOURCE_TABLES.values():
        spec.write([], directory)


def test_header_only_files_load_as_empty_dataset(tmp_path):
    write_headers(tmp_path)
    ds = sm.load_source(tmp_path)
    assert all(n == 0 for n in ds.row_counts().values())
    assert len(ds.row_counts()) == 9


def test_single_customer_row(tmp_path):
    write_headers(tmp_path)
    (tmp_path / "customers.csv").write_text("customerId,partyRoleName\nC1,consumer\n")
    ds = sm.load_source(tmp_path)
    assert ds.customers == (sm.Customer("C1", "consumer"),)


def test_duplicate_order_id_names_id_and_both_lines(tmp_path):
    write_headers(tmp_path)
    ds = dataset(chain(1))
    sm.SOURCE_TABLES["customer_orders"][0].write(ds.customer_orders * 2, tmp_path)
    with pytest.raises(sm.SourceFormatError) as err:
        sm.load_source(tmp_path)
    message = str(err.value)
    assert "'CO1'" in message
    assert "lines 2 and 3" in message


def test_missing_file_is_file_not_found(tmp_path):
    write_headers(tmp_path)
    (tmp_path / "cfs.csv").unlink()
    with pytest.raises(FileNotFoundError):
        sm.load_source(tmp_path)


def test_bad_header_and_bad_values_are_reported_per_line(tmp_path):
    write_headers(tmp_path)
    (tmp_path / "places.csv").write_text("id,area\nP1,north\n")
    (tmp_path / "customers.csv").write_text("customerId,partyRoleName\nC1\n")
    with pytest.raises(sm.SourceFormatError) as err:
        sm.load_source(tmp_path)
    text = "\n".join(err.value.problems)
    assert "places.csv:1" in text
    assert "customers.csv:2" in text


def test_consistent_dataset_has_empty_report():
    assert sm.validate(dataset(chain(1))).ok


def test_completion_before_start_is_temporal_order():
    rows = chain(1)
    rows[0] = dataclasses.replace(rows[0], interaction_date_complete=at(-1))
    report = sm.validate(dataset(rows))
    temporal = [v for v in report if v.rule == "temporal-order"]
    assert len(temporal) == 1
    assert temporal[0].id == "CO1"


def test_service_order_without_customer_order_is_orphan():
    rows = chain(1)
    orphan = dataclasses.replace(rows[1], service_order_id="SO9", chain_id="BI9")
    report = sm.validate(dataset(rows, orphan))
    assert [(v.id, v.rule) for v in report if v.rule == "orphan-chain"] == [("SO9", "orphan-chain")]


def test_dangling_customer_and_place():
    rows = chain(1, customer="C404", place="P404")
    report = sm.validate(dataset(rows))
    assert report.rules()["dangling-reference"] == 2


def test_second_service_order_on_a_chain_is_duplicate_chain():
    rows = chain(1)
    extra = dataclasses.replace(rows[1], service_order_id="SO1b")
    assert sm.validate(dataset(rows, extra)).rules()["duplicate-chain"] == 1


def test_nesting_violation_is_reported_on_the_chain():
    points = (at(0), at(0.5), at(0.2), at(2), at(2.5), at(3))  # RO starts before SO
    report = sm.validate(dataset(chain(1, points)))
    assert [(v.entity, v.rule) for v in report] == [("chain", "chain-nesting")]


def test_restored_before_detected_and_unknown_codes():
    ticket = sm.TroubleTicket("TT1", "BI1", "service-order", "Bogus", at(5), at(4), at(5), None)
    cfs_bad = chain(2, status=9)
    report = sm.validate(dataset(chain(1), ticket, cfs_bad))
    assert report.rules() == {"temporal-order": 1, "invalid-value": 2}


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(0, 30), cut=st.integers(0, 10**6))
def test_validate_is_pure_and_rules_are_published(seed, n, cut):
    ds = datagen.generate(datagen.GenConfig(seed=seed, order_count=n))
    # break one customer order so there is something to report
    if ds.customer_orders:
        i = cut % len(ds.customer_orders)
        orders = list(ds.customer_orders)
        orders[i] = dataclasses.replace(orders[i], customer_ref="nobody", chain_id="")
        ds = dataclasses.replace(ds, customer_orders=tuple(orders))
    first, second = sm.validate(ds), sm.validate(ds)
    assert first == second
    assert set(first.rules()) <= set(sm.RULES)


def test_write_back_round_trip(tmp_path, seed42):
    datagen.write_source(seed42, tmp_path)
    assert sm.load_source(tmp_path) == seed42
