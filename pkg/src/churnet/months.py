"""Monthly grid arithmetic.

All temporal logic in the package runs on integer month indices counted
from the epoch month 2000-01 (index 0).  The snapshot instant of a month
is the last calendar day of that month, so a spell is active at index m
iff start_date <= snapshot_date(m) < end_date.
"""

from __future__ import annotations

import calendar
import datetime as dt

EPOCH_YEAR = 2000


def month_index(year: int, month: int) -> int:
    """Index of a (year, month) pair; 2000-01 -> 0."""
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {month}")
    return (year - EPOCH_YEAR) * 12 + (month - 1)


def year_month(m: int) -> tuple[int, int]:
    """Inverse of :func:`month_index`."""
    y, mm = divmod(m, 12)
    return EPOCH_YEAR + y, mm + 1


def month_of(d: dt.date) -> int:
    return month_index(d.year, d.month)


def snapshot_date(m: int) -> dt.date:
    """Last calendar day of month m."""
    y, mm = year_month(m)
    return dt.date(y, mm, calendar.monthrange(y, mm)[1])


def first_day(m: int) -> dt.date:
    y, mm = year_month(m)
    return dt.date(y, mm, 1)


def parse_month(text: str) -> int:
    """Parse 'YYYY-MM' into a month index."""
    parts = text.split("-")
    if len(parts) != 2:
        raise ValueError(f"not a YYYY-MM month: {text!r}")
    return month_index(int(parts[0]), int(parts[1]))


def format_month(m: int) -> str:
    y, mm = year_month(m)
    return f"{y:04d}-{mm:02d}"
