"""Peer-departure threshold effects.

For a person active at month m, the peer set is frozen at the window start
(their co-employment neighbors at m - window); the departure fraction is
the share of those peers whose then-active spell ended within the window.
The report conditions turnover on that fraction exceeding each threshold
and expresses the conditional rate as a relative lift over the
unconditional rate across all eligible person-months.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .months import format_month
from .registry import RecordSet, RegistryError, TemporalGrid


@dataclass(frozen=True)
class ContagionConfig:
    window_months: int = 6
    thresholds: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(10))
    min_peers: int = 3

    def __post_init__(self):
        if self.window_months < 1:
            raise RegistryError("window_months must be >= 1")
        t = self.thresholds
        if any(not (0 <= x < 1) for x in t) or any(t[i] >= t[i + 1] for i in range(len(t) - 1)):
            raise RegistryError("thresholds must be strictly increasing within [0, 1)")


@dataclass(frozen=True)
class ThresholdRow:
    threshold: float
    n_above: int
    turnover_rate_above: Optional[float]
    baseline_rate: float
    relative_lift: Optional[float]


@dataclass(frozen=True)
class ContagionReport:
    rows: tuple[ThresholdRow, ...]
    baseline_rate: Optional[float]
    n_eligible: int
    diagnostic: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "n_above", "rate_above", "baseline", "relative_lift"])
        for r in self.rows:
            w.writerow(
                [
                    repr(r.threshold),
                    r.n_above,
                    "" if r.turnover_rate_above is None else repr(r.turnover_rate_above),
                    repr(r.baseline_rate),
                    "" if r.relative_lift is None else repr(r.relative_lift),
                ]
            )
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "baseline_rate": self.baseline_rate,
            "n_eligible": self.n_eligible,
            "diagnostic": self.diagnostic,
            "rows": [
                {
                    "threshold": r.threshold,
                    "n_above": r.n_above,
                    "rate_above": r.turnover_rate_above,
                    "baseline": r.baseline_rate,
                    "relative_lift": r.relative_lift,
                }
                for r in self.rows
            ],
        }


class _MonthIndexes:
    """Per-month person/firm groupings reused across the analysis."""

    def __init__(self, grid: TemporalGrid, rs: RecordSet):
        self.grid = grid
        self.rs = rs
        self._cache: dict[int, tuple[dict, dict, dict]] = {}

    def at(self, m: int):
        """(person -> set of firms, firm -> set of persons, person -> departed_in?) at m."""
        if m not in self._cache:
            person_firms: dict[str, set[str]] = {}
            firm_persons: dict[str, set[str]] = {}
            spells: dict[str, list[int]] = {}
            for i in self.grid.active[m]:
                rec = self.rs.records[i]
                person_firms.setdefault(rec.person_id, set()).add(rec.firm_id)
                firm_persons.setdefault(rec.firm_id, set()).add(rec.person_id)
                spells.setdefault(rec.person_id, []).append(i)
            self._cache[m] = (person_firms, firm_persons, spells)
        return self._cache[m]


def peer_departure_fraction(
    person: str,
    m: int,
    grid: TemporalGrid,
    rs: RecordSet,
    window: int = 6,
    min_peers: int = 3,
    _indexes: Optional[_MonthIndexes] = None,
) -> Optional[float]:
    """Fraction of window-start peers who departed during the window.

    Returns None when the person was not active at the window start or has
    fewer than ``min_peers`` peers there.
    """
    s = m - window
    if s < grid.start or m > grid.end:
        raise RegistryError(f"window start {s} or month {m} outside grid")
    idx = _indexes or _MonthIndexes(grid, rs)
    person_firms, firm_persons, spells = idx.at(s)
    if person not in person_firms:
        return None
    peers: set[str] = set()
    for f in person_firms[person]:
        peers |= firm_persons[f]
    peers.discard(person)
    if len(peers) < min_peers:
        return None
    departed = 0
    for q in peers:
        # departed = any spell active at the window start ended in (s, m]
        for i in spells[q]:
            last = rs.records[i].last_active_month
            if last is not None and s <= last <= m - 1:
                departed += 1
                break
    return departed / len(peers)


def _person_label(grid: TemporalGrid, rs: RecordSet, spell_ids: Sequence[int], m: int) -> int:
    return max(grid.labels[(i, m)] for i in spell_ids)


def threshold_analysis(
    grid: TemporalGrid, rs: RecordSet, cfg: ContagionConfig = ContagionConfig()
) -> ContagionReport:
    """Conditional turnover rates above each peer-departure threshold."""
    w = cfg.window_months
    if grid.end - grid.start < w + 2:
        raise RegistryError(f"grid spans fewer than window + 2 = {w + 2} months")
    idx = _MonthIndexes(grid, rs)

    fractions: list[float] = []
    labels: list[int] = []
    for m in range(grid.start + w, grid.end + 1):
        s = m - w
        person_firms_s, firm_persons_s, spells_s = idx.at(s)
        person_firms_m, _, spells_m = idx.at(m)

        # departure flags at window start: any spell active at s ends in (s, m]
        departed: dict[str, bool] = {}
        for q, spell_ids in spells_s.items():
            flag = False
            for i in spell_ids:
                last = rs.records[i].last_active_month
                if last is not None and s <= last <= m - 1:
                    flag = True
                    break
            departed[q] = flag
        firm_n: dict[str, int] = {f: len(ps) for f, ps in firm_persons_s.items()}
        firm_dep: dict[str, int] = {
            f: sum(1 for q in ps if departed[q]) for f, ps in firm_persons_s.items()
        }

        for p, firms_now in person_firms_m.items():
            firms_s = person_firms_s.get(p)
            if not firms_s:
                continue
            if len(firms_s) == 1:
                (f,) = tuple(firms_s)
                n_peers = firm_n[f] - 1
                n_dep = firm_dep[f] - (1 if departed[p] else 0)
            else:
                peers: set[str] = set()
                for f in firms_s:
                    peers |= firm_persons_s[f]
                peers.discard(p)
                n_peers = len(peers)
                n_dep = sum(1 for q in peers if departed[q])
            if n_peers < cfg.min_peers:
                continue
            fractions.append(n_dep / n_peers)
            labels.append(_person_label(grid, rs, spells_m[p], m))

    n_eligible = len(fractions)
    if n_eligible == 0:
        return ContagionReport(rows=(), baseline_rate=None, n_eligible=0,
                               diagnostic="no eligible person-months")
    frac_a = np.asarray(fractions)
    lab_a = np.asarray(labels)
    baseline = float(lab_a.mean())
    rows = []
    for tau in cfg.thresholds:
        mask = frac_a > tau
        n_above = int(mask.sum())
        if n_above == 0:
            rows.append(ThresholdRow(tau, 0, None, baseline, None))
            continue
        rate = float(lab_a[mask].mean())
        lift = rate / baseline - 1 if baseline > 0 else None
        rows.append(ThresholdRow(tau, n_above, rate, baseline, lift))
    return ContagionReport(rows=tuple(rows), baseline_rate=baseline, n_eligible=n_eligible)
