"""Per-(person, month) feature computation and monthly matrix assembly.

All base features are computed strictly from events dated at or before the
snapshot, so truncating the registry at the snapshot leaves them unchanged.
Missing values are encoded as NaN, never zero-imputed; downstream tree
learners route missing values to the child chosen during training.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .graphs import EmployeeGraphBuilder, FirmWeightScheme, build_firm_graph
from .months import format_month
from .propagation import FeatureTable, propagate
from .registry import Gender, RecordSet, RegistryError, Role, TemporalGrid


class FeatureCategory(Enum):
    INDIVIDUAL = "individual"
    FIRM = "firm"
    DEMOGRAPHIC = "demographic"
    NETWORK_PROPAGATED = "network_propagated"


class FeatureSource(Enum):
    BASE = "base"
    PROPAGATED_EMPLOYEE = "propagated_employee"
    PROPAGATED_FIRM = "propagated_firm"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    category: FeatureCategory
    source: FeatureSource = FeatureSource.BASE
    base: Optional[str] = None  # referenced base column for propagated entries
    hops: int = 1


@dataclass(frozen=True)
class FeatureCatalog:
    entries: tuple[CatalogEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise RegistryError("duplicate feature names in catalog")
        base_names = {e.name for e in self.entries if e.source is FeatureSource.BASE}
        for e in self.entries:
            if e.source is not FeatureSource.BASE and e.base not in base_names:
                raise RegistryError(f"propagated entry {e.name!r} references unknown base {e.base!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def subset(self, names: Sequence[str]) -> "FeatureCatalog":
        wanted = set(names)
        unknown = wanted - set(self.names)
        if unknown:
            raise RegistryError(f"unknown feature names: {sorted(unknown)}")
        kept = tuple(e for e in self.entries if e.name in wanted)
        base_kept = {e.name for e in kept if e.source is FeatureSource.BASE}
        for e in kept:
            if e.source is not FeatureSource.BASE and e.base not in base_kept:
                # keep the referenced base implicitly available for propagation
                pass
        return FeatureCatalog(entries=kept)

    def manifest(self) -> list[dict]:
        return [
            {
                "name": e.name,
                "category": e.category.value,
                "source": e.source.value,
                "base": e.base,
                "hops": e.hops,
            }
            for e in self.entries
        ]


INDIVIDUAL_FEATURES = (
    "tenure_months",
    "career_months",
    "n_prior_firms",
    "mobility_rate",
    "is_responsible_officer",
    "n_concurrent_spells",
)
FIRM_FEATURES = (
    "headcount",
    "firm_age_months",
    "mean_employee_tenure_months",
    "tenure_q25",
    "tenure_q50",
    "tenure_q75",
    "tenure_q90",
    "departure_rate_6m",
    "headcount_growth_6m",
)
DEMOGRAPHIC_FEATURES = ("gender_f", "gender_m", "region_code")
PROPAGATED_BASES = (
    "tenure_months",
    "mobility_rate",
    "departure_rate_6m",
    "mean_employee_tenure_months",
    "tenure_q75",
    "headcount_growth_6m",
)


def default_catalog() -> FeatureCatalog:
    """The 36-column default: 18 base + 18 propagated."""
    entries: list[CatalogEntry] = []
    for n in INDIVIDUAL_FEATURES:
        entries.append(CatalogEntry(n, FeatureCategory.INDIVIDUAL))
    for n in FIRM_FEATURES:
        entries.append(CatalogEntry(n, FeatureCategory.FIRM))
    for n in DEMOGRAPHIC_FEATURES:
        entries.append(CatalogEntry(n, FeatureCategory.DEMOGRAPHIC))
    for n in PROPAGATED_BASES:
        entries.append(
            CatalogEntry(
                f"emp_k1_{n}",
                FeatureCategory.NETWORK_PROPAGATED,
                FeatureSource.PROPAGATED_EMPLOYEE,
                base=n,
                hops=1,
            )
        )
    for n in PROPAGATED_BASES:
        entries.append(
            CatalogEntry(
                f"firm_k1_{n}",
                FeatureCategory.NETWORK_PROPAGATED,
                FeatureSource.PROPAGATED_FIRM,
                base=n,
                hops=1,
            )
        )
    for n in PROPAGATED_BASES:
        entries.append(
            CatalogEntry(
                f"emp_k2_{n}",
                FeatureCategory.NETWORK_PROPAGATED,
                FeatureSource.PROPAGATED_EMPLOYEE,
                base=n,
                hops=2,
            )
        )
    return FeatureCatalog(entries=tuple(entries))


def no_network_catalog() -> FeatureCatalog:
    """Base-only variant: individual + firm + demographic columns."""
    cat = default_catalog()
    return cat.subset([e.name for e in cat.entries if e.source is FeatureSource.BASE])


@dataclass(frozen=True)
class FeatureMatrix:
    snapshot: int
    rows: tuple[tuple[str, str], ...]  # (person_id, firm_id)
    columns: tuple[str, ...]
    values: np.ndarray  # (n_rows, n_cols), NaN = missing
    labels: np.ndarray  # (n_rows,) in {0, 1}

    def select(self, columns: Sequence[str]) -> "FeatureMatrix":
        """Column-subset view with the same rows and labels."""
        idx = []
        for c in columns:
            if c not in self.columns:
                raise RegistryError(f"unknown column {c!r}")
            idx.append(self.columns.index(c))
        return FeatureMatrix(
            snapshot=self.snapshot,
            rows=self.rows,
            columns=tuple(columns),
            values=self.values[:, idx],
            labels=self.labels,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["person_id", "firm_id", "month", *self.columns, "label"])
        month = format_month(self.snapshot)
        for (p, f), vec, y in zip(self.rows, self.values, self.labels):
            w.writerow([p, f, month, *[repr(float(v)) for v in vec], int(y)])
        return buf.getvalue()


class AssemblyError(RegistryError):
    pass


class FeaturePipeline:
    """Bulk builder of monthly feature matrices over one registry.

    Precomputes per-person and per-firm indices once, then serves cached
    matrices per month, including propagated columns.
    """

    def __init__(
        self,
        rs: RecordSet,
        grid: TemporalGrid,
        catalog: Optional[FeatureCatalog] = None,
        firm_scheme: FirmWeightScheme = FirmWeightScheme(),
    ):
        self.rs = rs
        self.grid = grid
        self.catalog = catalog or default_catalog()
        self.firm_scheme = firm_scheme
        self.emp_builder = EmployeeGraphBuilder(rs)
        self._matrix_cache: dict[int, FeatureMatrix] = {}

        self.person_first_start: dict[str, int] = {}
        # per person: [(first start month of each distinct firm, firm)] sorted
        person_firm_first: dict[str, dict[str, int]] = {}
        self.firm_first_start: dict[str, int] = {}
        self.firm_departures: dict[str, dict[int, int]] = {}
        self.person_gender: dict[str, Gender] = {}
        self.person_region: dict[str, Optional[str]] = {}
        for rec in rs.records:
            p, f, sm = rec.person_id, rec.firm_id, rec.first_active_month
            if p not in self.person_first_start or sm < self.person_first_start[p]:
                self.person_first_start[p] = sm
            ff = person_firm_first.setdefault(p, {})
            if f not in ff or sm < ff[f]:
                ff[f] = sm
            if f not in self.firm_first_start or sm < self.firm_first_start[f]:
                self.firm_first_start[f] = sm
            if rec.end_date is not None:
                em = rec.last_active_month + 1  # month the spell ends in
                dep = self.firm_departures.setdefault(f, {})
                dep[em] = dep.get(em, 0) + 1
            if self.person_gender.get(p, Gender.UNKNOWN) is Gender.UNKNOWN:
                self.person_gender[p] = rec.gender
            if self.person_region.get(p) is None and rec.region:
                self.person_region[p] = rec.region
        self.person_firm_firsts: dict[str, list[tuple[int, str]]] = {
            p: sorted((sm, f) for f, sm in ff.items()) for p, ff in person_firm_first.items()
        }
        regions = sorted({r for r in self.person_region.values() if r})
        self.region_codes = {r: i + 1 for i, r in enumerate(regions)}

    # ---- per-month primitives -------------------------------------------

    def _active_rows(self, m: int) -> list[int]:
        if not (self.grid.start <= m <= self.grid.end):
            raise RegistryError(f"month {m} outside grid")
        return list(self.grid.active[m])

    def _firm_rosters(self, m: int) -> dict[str, list[int]]:
        rosters: dict[str, list[int]] = {}
        for i in self.grid.active[m]:
            rosters.setdefault(self.rs.records[i].firm_id, []).append(i)
        return rosters

    def _headcount(self, m: int) -> dict[str, int]:
        if m < self.grid.start or m > self.grid.end:
            # outside the grid, fall back to direct record counting
            counts: dict[str, set] = {}
            for rec in self.rs.records:
                if rec.active_at(m):
                    counts.setdefault(rec.firm_id, set()).add(rec.person_id)
            return {f: len(s) for f, s in counts.items()}
        counts2: dict[str, set] = {}
        for i in self.grid.active[m]:
            rec = self.rs.records[i]
            counts2.setdefault(rec.firm_id, set()).add(rec.person_id)
        return {f: len(s) for f, s in counts2.items()}

    def individual_vector(self, rec_idx: int, m: int, concurrent: int) -> np.ndarray:
        rec = self.rs.records[rec_idx]
        p = rec.person_id
        tenure = m - rec.first_active_month + 1
        career = m - self.person_first_start[p] + 1
        firsts = self.person_firm_firsts[p]
        cur_start = rec.first_active_month
        prior = {f for sm, f in firsts if sm < cur_start and f != rec.firm_id}
        so_far = sum(1 for sm, _ in firsts if sm <= m)
        mobility = so_far / (max(1, career) / 12.0)
        return np.array(
            [
                float(tenure),
                float(career),
                float(len(prior)),
                mobility,
                1.0 if rec.role is Role.RESPONSIBLE_OFFICER else 0.0,
                float(concurrent),
            ]
        )

    def firm_vector(self, firm: str, m: int, rosters: dict[str, list[int]]) -> np.ndarray:
        spells = rosters.get(firm)
        if not spells:
            raise RegistryError(f"firm {firm!r} inactive at month {m}")
        persons = {self.rs.records[i].person_id for i in spells}
        tenures = np.array(
            [m - self.rs.records[i].first_active_month + 1 for i in spells], dtype=float
        )
        q25, q50, q75, q90 = np.quantile(tenures, [0.25, 0.5, 0.75, 0.9])
        age = m - self.firm_first_start[firm] + 1

        deps = self.firm_departures.get(firm, {})
        n_dep = sum(deps.get(mm, 0) for mm in range(m - 5, m + 1))
        hcs = []
        for mm in range(m - 5, m + 1):
            hcs.append(self._headcount_one(firm, mm))
        mean_hc = float(np.mean(hcs)) if hcs else 0.0
        dep_rate = n_dep / mean_hc if mean_hc > 0 else 0.0

        hc_now = len(persons)
        hc_prev = self._headcount_one(firm, m - 6)
        growth = (hc_now - hc_prev) / max(1, hc_prev)
        return np.array(
            [
                float(hc_now),
                float(age),
                float(np.mean(tenures)),
                float(q25),
                float(q50),
                float(q75),
                float(q90),
                float(dep_rate),
                float(growth),
            ]
        )

    def _headcount_one(self, firm: str, m: int) -> int:
        cache = getattr(self, "_hc_cache", None)
        if cache is None:
            cache = self._hc_cache = {}
        if m not in cache:
            cache[m] = self._headcount(m)
        return cache[m].get(firm, 0)

    def demographic_vector(self, person: str) -> np.ndarray:
        g = self.person_gender.get(person, Gender.UNKNOWN)
        if g is Gender.F:
            gf, gm = 1.0, 0.0
        elif g is Gender.M:
            gf, gm = 0.0, 1.0
        else:
            gf = gm = float("nan")
        region = self.person_region.get(person)
        code = float(self.region_codes[region]) if region else float("nan")
        return np.array([gf, gm, code])

    # ---- matrix assembly ------------------------------------------------

    def matrix(self, m: int) -> FeatureMatrix:
        if m not in self._matrix_cache:
            self._matrix_cache[m] = self._build_matrix(m)
        return self._matrix_cache[m]

    def _build_matrix(self, m: int) -> FeatureMatrix:
        rows_idx = self._active_rows(m)
        rosters = self._firm_rosters(m)
        recs = self.rs.records

        concurrent: dict[str, int] = {}
        for i in rows_idx:
            p = recs[i].person_id
            concurrent[p] = concurrent.get(p, 0) + 1

        base: dict[str, dict] = {}
        firm_vecs = {f: self.firm_vector(f, m, rosters) for f in rosters}
        row_base: list[dict[str, float]] = []
        for i in rows_idx:
            rec = recs[i]
            iv = self.individual_vector(i, m, concurrent[rec.person_id])
            fv = firm_vecs[rec.firm_id]
            dv = self.demographic_vector(rec.person_id)
            d = dict(zip(INDIVIDUAL_FEATURES, iv))
            d.update(zip(FIRM_FEATURES, fv))
            d.update(zip(DEMOGRAPHIC_FEATURES, dv))
            row_base.append(d)

        propagated = self._propagated_columns(m, rows_idx, row_base, rosters)
        return assemble_matrix(self.grid, self.rs, m, self.catalog, propagated, _pipeline=self)

    def _propagated_columns(
        self,
        m: int,
        rows_idx: list[int],
        row_base: list[dict[str, float]],
        rosters: dict[str, list[int]],
    ) -> dict[str, dict]:
        """Values for every propagated catalog entry, keyed per (person, firm) row."""
        cat = self.catalog
        prop_entries = [e for e in cat.entries if e.source is not FeatureSource.BASE]
        if not prop_entries:
            return {}
        recs = self.rs.records

        bases = sorted({e.base for e in prop_entries})
        # person-level node features: mean over the person's active rows
        person_sums: dict[str, np.ndarray] = {}
        person_counts: dict[str, int] = {}
        for i, d in zip(rows_idx, row_base):
            p = recs[i].person_id
            vec = np.array([d[b] for b in bases])
            if p in person_sums:
                person_sums[p] = person_sums[p] + vec
                person_counts[p] += 1
            else:
                person_sums[p] = vec
                person_counts[p] = 1
        person_feats = {p: person_sums[p] / person_counts[p] for p in person_sums}

        out: dict[str, dict] = {}
        emp_entries = [e for e in prop_entries if e.source is FeatureSource.PROPAGATED_EMPLOYEE]
        if emp_entries:
            g = self.emp_builder.build(self.grid, m)
            table = FeatureTable(feature_names=tuple(bases), values=person_feats)
            results: dict[int, FeatureTable] = {}
            for k in sorted({e.hops for e in emp_entries}):
                results[k] = propagate(g, table, k)
            for e in emp_entries:
                col = bases.index(e.base)
                out[e.name] = {
                    p: float(results[e.hops].values[p][col]) for p in person_feats
                }

        firm_entries = [e for e in prop_entries if e.source is FeatureSource.PROPAGATED_FIRM]
        if firm_entries:
            fg = build_firm_graph(self.grid, self.rs, m, self.firm_scheme)
            # firm node features: mean of member rows' base values
            firm_sums: dict[str, np.ndarray] = {}
            firm_counts: dict[str, int] = {}
            for i, d in zip(rows_idx, row_base):
                f = recs[i].firm_id
                vec = np.array([d[b] for b in bases])
                if f in firm_sums:
                    firm_sums[f] = firm_sums[f] + vec
                    firm_counts[f] += 1
                else:
                    firm_sums[f] = vec
                    firm_counts[f] = 1
            firm_feats = {f: firm_sums[f] / firm_counts[f] for f in firm_sums}
            ftable = FeatureTable(feature_names=tuple(bases), values=firm_feats)
            fresults: dict[int, FeatureTable] = {}
            for k in sorted({e.hops for e in firm_entries}):
                fresults[k] = propagate(fg, ftable, k)
            for e in firm_entries:
                col = bases.index(e.base)
                out[e.name] = {
                    (recs[i].person_id, recs[i].firm_id): float(
                        fresults[e.hops].values[recs[i].firm_id][col]
                    )
                    for i in rows_idx
                }
        return out


def individual_features(person: str, m: int, rs: RecordSet, firm: Optional[str] = None) -> np.ndarray:
    """Six individual columns for a person active at m.

    With multiple active spells, ``firm`` selects the row; default is the
    spell with the latest start date.
    """
    grid_like = [
        (i, rec)
        for i, rec in enumerate(rs.records)
        if rec.person_id == person and rec.active_at(m)
    ]
    if firm is not None:
        grid_like = [(i, rec) for i, rec in grid_like if rec.firm_id == firm]
    if not grid_like:
        raise RegistryError(f"person {person!r} not active at month {m}")
    pipe = _mini_pipeline(rs, m)
    concurrent = sum(1 for rec in rs.records if rec.person_id == person and rec.active_at(m))
    idx = max(grid_like, key=lambda t: t[1].start_date)[0]
    return pipe.individual_vector(idx, m, concurrent)


def firm_features(firm: str, m: int, rs: RecordSet) -> np.ndarray:
    """Nine firm columns for a firm active at m."""
    pipe = _mini_pipeline(rs, m)
    rosters = pipe._firm_rosters(m)
    return pipe.firm_vector(firm, m, rosters)


def demographic_features(person: str, rs: RecordSet) -> np.ndarray:
    pipe = _mini_pipeline(rs, None)
    return pipe.demographic_vector(person)


def _mini_pipeline(rs: RecordSet, m: Optional[int]) -> FeaturePipeline:
    from .registry import build_temporal_grid

    months = [rec.first_active_month for rec in rs.records]
    last = [rec.last_active_month for rec in rs.records if rec.last_active_month is not None]
    lo = min(months) if months else 0
    hi = max([m] if m is not None else [lo] + last + months)
    grid = build_temporal_grid(rs, lo, max(lo, hi))
    return FeaturePipeline(rs, grid, default_catalog())


def assemble_matrix(
    grid: TemporalGrid,
    rs: RecordSet,
    m: int,
    catalog: FeatureCatalog,
    propagated: Mapping[str, Mapping] = (),
    _pipeline: Optional[FeaturePipeline] = None,
) -> FeatureMatrix:
    """Assemble the full matrix for month m in catalog column order.

    ``propagated`` supplies every non-base catalog column, keyed either by
    person_id or by (person_id, firm_id); a missing column raises an
    :class:`AssemblyError` naming it.
    """
    pipe = _pipeline or FeaturePipeline(rs, grid, catalog)
    rows_idx = list(grid.active[m]) if grid.start <= m <= grid.end else None
    if rows_idx is None:
        raise RegistryError(f"month {m} outside grid")
    propagated = dict(propagated) if not isinstance(propagated, dict) else propagated

    recs = rs.records
    rosters = pipe._firm_rosters(m)
    concurrent: dict[str, int] = {}
    for i in rows_idx:
        p = recs[i].person_id
        concurrent[p] = concurrent.get(p, 0) + 1
    firm_vecs = {f: pipe.firm_vector(f, m, rosters) for f in rosters}

    n = len(rows_idx)
    cols = catalog.names
    values = np.full((n, len(cols)), np.nan)
    labels = np.zeros(n, dtype=int)
    rows = []
    for r, i in enumerate(rows_idx):
        rec = recs[i]
        rows.append((rec.person_id, rec.firm_id))
        labels[r] = grid.labels[(i, m)]
        iv = dict(zip(INDIVIDUAL_FEATURES, pipe.individual_vector(i, m, concurrent[rec.person_id])))
        iv.update(zip(FIRM_FEATURES, firm_vecs[rec.firm_id]))
        iv.update(zip(DEMOGRAPHIC_FEATURES, pipe.demographic_vector(rec.person_id)))
        for c, e in enumerate(catalog.entries):
            if e.source is FeatureSource.BASE:
                values[r, c] = iv[e.name]
            else:
                if e.name not in propagated:
                    raise AssemblyError(f"missing propagated column {e.name!r}")
                col = propagated[e.name]
                key: object = (rec.person_id, rec.firm_id)
                if key in col:
                    values[r, c] = col[key]
                elif rec.person_id in col:
                    values[r, c] = col[rec.person_id]
                else:
                    raise AssemblyError(
                        f"propagated column {e.name!r} has no value for row {key}"
                    )
    return FeatureMatrix(
        snapshot=m, rows=tuple(rows), columns=tuple(cols), values=values, labels=labels
    )
