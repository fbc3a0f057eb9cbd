from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from otpmart.tables import (
    format_days,
    format_timestamp,
    parse_days,
    parse_timestamp,
    seconds_between,
    time_key,
)

utc_seconds = st.datetimes(
    min_value=datetime(1970, 1, 1), max_value=datetime(2100, 1, 1)
).map(lambda d: d.replace(microsecond=0, tzinfo=timezone.utc))


@given(utc_seconds)
def test_timestamp_round_trip(ts):
    assert parse_timestamp(format_timestamp(ts)) == ts


@pytest.mark.parametrize(
    "text", ["2024-01-01", "2024-01-01T00:00:00", "2024-01-01 00:00:00Z", "2024-02-30T00:00:00Z", ""]
)
def test_malformed_timestamps_rejected(text):
    with pytest.raises(ValueError):
        parse_timestamp(text)


@given(st.integers(min_value=-10**9, max_value=10**9))
def test_days_round_trip_exact_to_the_second(seconds):
    assert parse_days(format_days(seconds)) == seconds


def test_days_format():
    assert format_days(3 * 86400 + 43200) == "3.500000"
    assert format_days(0) == "0.000000"


@given(utc_seconds, st.integers(min_value=-10**8, max_value=10**8))
def test_seconds_between_matches_offset(ts, offset):
    assert seconds_between(ts + timedelta(seconds=offset), ts) == offset


def test_time_key():
    assert time_key(datetime(2024, 1, 15, 23, 59, 59, tzinfo=timezone.utc)) == 20240115
    assert time_key(None) == 0
