import datetime as dt

import pytest

from churnet.months import (
    first_day,
    format_month,
    month_index,
    month_of,
    parse_month,
    snapshot_date,
    year_month,
)


def test_epoch_is_zero():
    assert month_index(2000, 1) == 0


def test_roundtrip_all_months():
    for m in range(-60, 600):
        y, mm = year_month(m)
        assert month_index(y, mm) == m


def test_month_of_date():
    assert month_of(dt.date(2000, 1, 31)) == 0
    assert month_of(dt.date(2007, 3, 15)) == month_index(2007, 3)


def test_snapshot_is_last_day():
    assert snapshot_date(month_index(2020, 2)) == dt.date(2020, 2, 29)
    assert snapshot_date(month_index(2021, 2)) == dt.date(2021, 2, 28)
    assert snapshot_date(month_index(2010, 12)) == dt.date(2010, 12, 31)


def test_first_day():
    assert first_day(month_index(2010, 7)) == dt.date(2010, 7, 1)


def test_parse_format_roundtrip():
    for text in ("2000-01", "2015-12", "1999-06"):
        assert format_month(parse_month(text)) == text


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_month("2015")
    with pytest.raises(ValueError):
        parse_month("2015-13")


def test_invalid_month_number():
    with pytest.raises(ValueError):
        month_index(2010, 0)
