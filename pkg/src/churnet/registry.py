"""Employment-spell registry: parsing, monthly grids, turnover labels, stats.

A spell is active at month index m iff start_date <= snapshot_date(m) and
(end_date is absent or end_date > snapshot_date(m)).  In month-index terms
that is month_of(start_date) <= m and (ongoing or m <= month_of(end_date) - 1).
The turnover label of an active spell at m is 1 iff the spell ends in the
following month, i.e. month_of(end_date) == m + 1.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .months import month_of, snapshot_date


class Role(Enum):
    REPRESENTATIVE = "REP"
    RESPONSIBLE_OFFICER = "RO"
    UNKNOWN = ""


class Gender(Enum):
    F = "F"
    M = "M"
    UNKNOWN = ""


class RegistryError(Exception):
    """Invalid registry input or arguments."""


class ParseError(RegistryError):
    """Raised when one or more input rows are rejected.

    ``row_errors`` holds (line_number, message) pairs; line numbers are
    1-based and include the header line.
    """

    def __init__(self, row_errors: Sequence[tuple[int, str]]):
        self.row_errors = list(row_errors)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.row_errors[:20])
        extra = "" if len(self.row_errors) <= 20 else f" (+{len(self.row_errors) - 20} more)"
        super().__init__(f"{len(self.row_errors)} rejected row(s): {lines}{extra}")


@dataclass(frozen=True)
class EmploymentRecord:
    """One licensing spell of a person at a firm."""

    person_id: str
    firm_id: str
    role: Role = Role.UNKNOWN
    start_date: dt.date = dt.date(2000, 1, 1)
    end_date: Optional[dt.date] = None  # None = ongoing
    gender: Gender = Gender.UNKNOWN
    region: Optional[str] = None

    def validate(self) -> None:
        if not self.person_id:
            raise RegistryError("empty person_id")
        if not self.firm_id:
            raise RegistryError("empty firm_id")
        if self.end_date is not None and self.end_date <= self.start_date:
            raise RegistryError(
                f"end_date {self.end_date} not after start_date {self.start_date}"
            )

    @property
    def first_active_month(self) -> int:
        return month_of(self.start_date)

    @property
    def last_active_month(self) -> Optional[int]:
        """Last month index at which the spell is active; None if ongoing."""
        if self.end_date is None:
            return None
        return month_of(self.end_date) - 1

    def active_at(self, m: int) -> bool:
        if self.first_active_month > m:
            return False
        last = self.last_active_month
        return last is None or m <= last


@dataclass(frozen=True)
class RecordSet:
    records: tuple[EmploymentRecord, ...]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.records)


CSV_HEADER = ["person_id", "firm_id", "role", "start_date", "end_date", "gender", "region"]

_ROLE_TOKENS = {r.value: r for r in Role}
_GENDER_TOKENS = {g.value: g for g in Gender}


def _parse_date(token: str) -> dt.date:
    try:
        return dt.date.fromisoformat(token)
    except ValueError as exc:
        raise RegistryError(f"malformed date {token!r}") from exc


def _record_from_fields(fields: Mapping[str, str]) -> EmploymentRecord:
    role_token = (fields.get("role") or "").strip()
    if role_token not in _ROLE_TOKENS:
        raise RegistryError(f"unknown role token {role_token!r}")
    gender_token = (fields.get("gender") or "").strip()
    if gender_token not in _GENDER_TOKENS:
        raise RegistryError(f"unknown gender token {gender_token!r}")
    end_token = (fields.get("end_date") or "").strip()
    rec = EmploymentRecord(
        person_id=(fields.get("person_id") or "").strip(),
        firm_id=(fields.get("firm_id") or "").strip(),
        role=_ROLE_TOKENS[role_token],
        start_date=_parse_date((fields.get("start_date") or "").strip()),
        end_date=_parse_date(end_token) if end_token else None,
        gender=_GENDER_TOKENS[gender_token],
        region=(fields.get("region") or "").strip() or None,
    )
    rec.validate()
    return rec


def parse_records(source, fmt: str = "csv", provenance: str = "") -> RecordSet:
    """Parse a CSV or JSONL registry export.

    ``source`` may be a path, bytes, text, or a file-like object.  Rows that
    violate record invariants (bad dates, end before start, duplicate
    (person, firm, start) keys, unknown role tokens) are rejected together
    in a :class:`ParseError` carrying line-numbered diagnostics.  A
    malformed header is fatal.
    """
    text = _read_text(source)
    if fmt == "csv":
        rows = _iter_csv(text)
    elif fmt == "jsonl":
        rows = _iter_jsonl(text)
    else:
        raise RegistryError(f"unknown format {fmt!r}")

    records: list[EmploymentRecord] = []
    errors: list[tuple[int, str]] = []
    seen: set[tuple[str, str, dt.date]] = set()
    for lineno, fields in rows:
        try:
            rec = _record_from_fields(fields)
            key = (rec.person_id, rec.firm_id, rec.start_date)
            if key in seen:
                raise RegistryError(f"duplicate key {key}")
            seen.add(key)
            records.append(rec)
        except RegistryError as exc:
            errors.append((lineno, str(exc)))
    if errors:
        raise ParseError(errors)
    return RecordSet(records=tuple(records), provenance=provenance)


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str) and ("\n" in source or "," in source or "{" in source):
        return source
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            return fh.read()
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    with open(source, "r", encoding="utf-8") as fh:  # path-like
        return fh.read()


def _iter_csv(text: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise RegistryError("empty input: missing header") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise RegistryError(f"malformed header: {header!r}, expected {CSV_HEADER}")
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_HEADER):
            yield lineno, {"__bad__": ""}
            continue
        yield lineno, dict(zip(CSV_HEADER, row))


def _iter_jsonl(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            yield lineno, {"__bad__": ""}
            continue
        yield lineno, {k: ("" if obj.get(k) is None else str(obj.get(k))) for k in CSV_HEADER}


def serialize_records(rs: RecordSet) -> str:
    """Canonical CSV form of a record set (round-trips through parsing)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rs.records:
        writer.writerow(
            [
                r.person_id,
                r.firm_id,
                r.role.value,
                r.start_date.isoformat(),
                r.end_date.isoformat() if r.end_date else "",
                r.gender.value,
                r.region or "",
            ]
        )
    return buf.getvalue()


def censor_records(rs: RecordSet, cutoff: dt.date) -> RecordSet:
    """Drop everything dated after ``cutoff``.

    Spells starting after the cutoff are removed; spells ending after it
    become ongoing.  Models the registry as it was known at the cutoff.
    """
    out = []
    for r in rs.records:
        if r.start_date > cutoff:
            continue
        if r.end_date is not None and r.end_date > cutoff:
            r = EmploymentRecord(
                person_id=r.person_id,
                firm_id=r.firm_id,
                role=r.role,
                start_date=r.start_date,
                end_date=None,
                gender=r.gender,
                region=r.region,
            )
        out.append(r)
    return RecordSet(records=tuple(out), provenance=rs.provenance)


@dataclass(frozen=True)
class TemporalGrid:
    """Monthly snapshot index over a record set.

    ``active[m]`` holds indices into ``rs.records`` of spells active at m;
    ``labels[(i, m)]`` is defined exactly for those spells.
    """

    start: int
    end: int
    active: Mapping[int, tuple[int, ...]]
    labels: Mapping[tuple[int, int], int]

    def months(self) -> range:
        return range(self.start, self.end + 1)

    def label(self, spell: int, m: int) -> int:
        return self.labels[(spell, m)]


def build_temporal_grid(rs: RecordSet, start: int, end: int) -> TemporalGrid:
    """Align spells onto the monthly grid [start, end] and attach labels."""
    if start > end:
        raise RegistryError(f"grid start {start} after end {end}")
    active: dict[int, list[int]] = {m: [] for m in range(start, end + 1)}
    labels: dict[tuple[int, int], int] = {}
    for i, rec in enumerate(rs.records):
        lo = max(rec.first_active_month, start)
        last = rec.last_active_month
        hi = end if last is None else min(last, end)
        if lo > hi:
            continue
        label_month = last  # label 1 exactly at the last active month
        for m in range(lo, hi + 1):
            active[m].append(i)
            labels[(i, m)] = 1 if m == label_month else 0
    return TemporalGrid(
        start=start,
        end=end,
        active={m: tuple(v) for m, v in active.items()},
        labels=labels,
    )


def relabel_grid(grid: TemporalGrid, labels: Mapping[tuple[int, int], int]) -> TemporalGrid:
    """Grid with the same active sets but replacement labels (diagnostics)."""
    return TemporalGrid(start=grid.start, end=grid.end, active=grid.active, labels=dict(labels))


@dataclass(frozen=True)
class DatasetStats:
    n_professionals: int
    n_firms: int
    n_records: int
    median_tenure_years: Optional[float]
    monthly_turnover_rate: Optional[float]
    median_firm_headcount: Optional[int]

    def as_dict(self) -> dict:
        return {
            "n_professionals": self.n_professionals,
            "n_firms": self.n_firms,
            "n_records": self.n_records,
            "median_tenure_years": self.median_tenure_years,
            "monthly_turnover_rate": self.monthly_turnover_rate,
            "median_firm_headcount": self.median_firm_headcount,
        }


def registry_stats(rs: RecordSet, grid: TemporalGrid) -> DatasetStats:
    """Headline counts and rates for a record set on its grid.

    Turnover rate is the mean over months of positives/actives; tenure is
    the median over completed spells; headcount is the median over
    (firm, month) active rosters.  Undefined rates are reported as None.
    """
    persons = {r.person_id for r in rs.records}
    firms = {r.firm_id for r in rs.records}

    tenures = [
        (r.end_date - r.start_date).days / 365.25
        for r in rs.records
        if r.end_date is not None
    ]
    median_tenure = statistics.median(tenures) if tenures else None

    monthly_rates = []
    headcounts = []
    for m in grid.months():
        spells = grid.active[m]
        if not spells:
            continue
        pos = sum(grid.labels[(i, m)] for i in spells)
        monthly_rates.append(pos / len(spells))
        per_firm: dict[str, set[str]] = {}
        for i in spells:
            rec = rs.records[i]
            per_firm.setdefault(rec.firm_id, set()).add(rec.person_id)
        headcounts.extend(len(v) for v in per_firm.values())
    rate = sum(monthly_rates) / len(monthly_rates) if monthly_rates else None
    median_hc = int(statistics.median(headcounts)) if headcounts else None

    return DatasetStats(
        n_professionals=len(persons),
        n_firms=len(firms),
        n_records=len(rs.records),
        median_tenure_years=median_tenure,
        monthly_turnover_rate=rate,
        median_firm_headcount=median_hc,
    )
