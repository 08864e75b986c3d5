"""Parse a registry export, build the monthly grid, and inspect labels.

The registry is a list of employment spells. A spell is active in a month m
when it has started by the last day of m and has not yet ended; its label
for month m is 1 exactly when the spell ends in the following month.
"""

from pathlib import Path

from churnet.months import format_month, parse_month
from churnet.registry import build_temporal_grid, parse_records, registry_stats

HERE = Path(__file__).parent

rs = parse_records(str(HERE / "data" / "toy_registry.csv"))
print(f"parsed {len(rs)} spells, {len({r.person_id for r in rs.records})} people\n")

grid = build_temporal_grid(rs, parse_month("2010-01"), parse_month("2010-12"))

print("month      active spells                 positives (spell ends next month)")
for m in grid.months():
    active = grid.active[m]
    pos = [i for i in active if grid.label(i, m) == 1]
    names = ", ".join(f"{rs.records[i].person_id}@{rs.records[i].firm_id}" for i in active)
    ends = ", ".join(f"{rs.records[i].person_id}@{rs.records[i].firm_id}" for i in pos) or "-"
    print(f"{format_month(m)}    {names:<44} {ends}")

stats = registry_stats(rs, grid)
print("\nheadline stats:")
for key, val in stats.as_dict().items():
    print(f"  {key}: {val}")
