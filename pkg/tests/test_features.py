import math

import numpy as np
import pytest

from churnet.features import (
    AssemblyError,
    FeatureCatalog,
    FeaturePipeline,
    assemble_matrix,
    default_catalog,
    demographic_features,
    firm_features,
    individual_features,
    no_network_catalog,
)
from churnet.months import month_index
from churnet.registry import RecordSet, RegistryError, build_temporal_grid, parse_records
from tests.test_registry import rec


def small_registry():
    records = (
        rec(p="A", f="F1", start="2010-01-01"),
        rec(p="B", f="F1", start="2010-04-01", end="2010-10-01"),
        rec(p="B", f="F2", start="2010-10-01"),
        rec(p="C", f="F2", start="2010-01-01"),
    )
    return RecordSet(records=records)


def grid_of(rs, lo=(2010, 1), hi=(2011, 6)):
    return build_temporal_grid(rs, month_index(*lo), month_index(*hi))


class TestCatalogs:
    def test_default_has_36_columns(self):
        cat = default_catalog()
        assert len(cat.entries) == 36
        names = cat.names
        assert len(set(names)) == 36
        assert "tenure_months" in names
        assert "emp_k1_departure_rate_6m" in names
        assert "firm_k1_tenure_months" in names
        assert "emp_k2_mobility_rate" in names

    def test_no_network_has_18_base_columns(self):
        cat = no_network_catalog()
        assert len(cat.entries) == 18
        assert not any(n.startswith(("emp_", "firm_k")) for n in cat.names)

    def test_duplicate_names_rejected(self):
        e = default_catalog().entries
        with pytest.raises(RegistryError):
            FeatureCatalog(entries=e + (e[0],))

    def test_subset_unknown_name_rejected(self):
        with pytest.raises(RegistryError):
            default_catalog().subset(["nope"])


class TestIndividualFeatures:
    def test_hand_computed(self):
        rs = small_registry()
        m = month_index(2010, 12)
        v = individual_features("B", m, rs)
        # active spell at F2 started October: tenure Oct..Dec = 3
        assert v[0] == 3.0
        # career since April = 9 months
        assert v[1] == 9.0
        # one prior firm (F1)
        assert v[2] == 1.0
        # mobility: 2 distinct firms / (9 months / 12)
        assert v[3] == pytest.approx(2 / (9 / 12))
        assert v[4] == 0.0  # representative
        assert v[5] == 1.0  # one active spell

    def test_inactive_person_rejected(self):
        with pytest.raises(RegistryError):
            individual_features("B", month_index(2009, 1), small_registry())


class TestFirmFeatures:
    def test_hand_computed(self):
        rs = small_registry()
        m = month_index(2010, 12)
        v = firm_features("F2", m, rs)
        # members: B (tenure 3), C (tenure 12)
        assert v[0] == 2.0  # headcount
        assert v[1] == 12.0  # firm age since January
        assert v[2] == pytest.approx((3 + 12) / 2)
        assert v[3] == pytest.approx(np.quantile([3, 12], 0.25))
        assert v[6] == pytest.approx(np.quantile([3, 12], 0.9))
        # no F2 departures in Jul..Dec
        assert v[7] == 0.0
        # headcount grew from 1 (June) to 2
        assert v[8] == pytest.approx((2 - 1) / 1)

    def test_departure_rate_counts_window_exits(self):
        rs = small_registry()
        m = month_index(2010, 12)
        v = firm_features("F1", m, rs)
        # B left F1 effective October (end 2010-10-01); mean headcount over
        # Jul..Dec = (2+2+2+1+1+1)/6 = 1.5 -> rate 1/1.5
        assert v[7] == pytest.approx(1 / 1.5)

    def test_inactive_firm_rejected(self):
        with pytest.raises(RegistryError):
            firm_features("F9", month_index(2010, 6), small_registry())


class TestDemographics:
    def test_codes(self):
        csv = (
            "person_id,firm_id,role,start_date,end_date,gender,region\n"
            "A,F1,REP,2010-01-01,,F,HK\n"
            "B,F1,REP,2010-01-01,,M,\n"
            "C,F1,REP,2010-01-01,,,KLN\n"
        )
        rs = parse_records(csv)
        a = demographic_features("A", rs)
        assert a.tolist() == [1.0, 0.0, 1.0]  # HK sorts before KLN
        b = demographic_features("B", rs)
        assert b[0] == 0.0 and b[1] == 1.0 and math.isnan(b[2])
        c = demographic_features("C", rs)
        assert math.isnan(c[0]) and math.isnan(c[1]) and c[2] == 2.0


class TestMatrixAssembly:
    def test_rows_columns_labels(self):
        rs = small_registry()
        grid = grid_of(rs)
        pipe = FeaturePipeline(rs, grid)
        m = month_index(2010, 9)
        mat = pipe.matrix(m)
        assert mat.columns == default_catalog().names
        assert mat.values.shape == (len(mat.rows), 36)
        assert ("B", "F1") in mat.rows
        # B's F1 spell ends next month, so that row is the only positive
        b_idx = mat.rows.index(("B", "F1"))
        assert mat.labels[b_idx] == 1
        assert mat.labels.sum() == 1

    def test_base_columns_match_standalone_functions(self):
        rs = small_registry()
        grid = grid_of(rs)
        pipe = FeaturePipeline(rs, grid)
        m = month_index(2010, 12)
        mat = pipe.matrix(m)
        r = mat.rows.index(("C", "F2"))
        want_i = individual_features("C", m, rs)
        want_f = firm_features("F2", m, rs)
        got = mat.values[r]
        assert got[:6] == pytest.approx(want_i)
        assert got[6:15] == pytest.approx(want_f)

    def test_propagated_columns_hand_computed(self):
        # A alone with B at F1: emp graph has a single A-B edge, so one-hop
        # propagation swaps their tenures
        records = (rec(p="A", f="F1", start="2010-01-01"), rec(p="B", f="F1", start="2010-07-01"))
        rs = RecordSet(records=records)
        grid = build_temporal_grid(rs, month_index(2010, 1), month_index(2010, 12))
        pipe = FeaturePipeline(rs, grid)
        m = month_index(2010, 12)
        mat = pipe.matrix(m)
        ia = mat.rows.index(("A", "F1"))
        ib = mat.rows.index(("B", "F1"))
        c_ten = mat.columns.index("tenure_months")
        c_k1 = mat.columns.index("emp_k1_tenure_months")
        c_k2 = mat.columns.index("emp_k2_tenure_months")
        assert mat.values[ia, c_ten] == 12.0 and mat.values[ib, c_ten] == 6.0
        assert mat.values[ia, c_k1] == 6.0 and mat.values[ib, c_k1] == 12.0
        # two hops comes back to self
        assert mat.values[ia, c_k2] == 12.0 and mat.values[ib, c_k2] == 6.0
        # the single firm has no mobility edges: firm propagation keeps values
        c_f1 = mat.columns.index("firm_k1_tenure_months")
        assert mat.values[ia, c_f1] == pytest.approx((12 + 6) / 2)

    def test_missing_propagated_column_raises(self):
        rs = small_registry()
        grid = grid_of(rs)
        with pytest.raises(AssemblyError):
            assemble_matrix(grid, rs, month_index(2010, 6), default_catalog(), {})

    def test_nan_preserved_not_zero_imputed(self):
        rs = small_registry()  # no gender/region info in rec() helper
        grid = grid_of(rs)
        pipe = FeaturePipeline(rs, grid, no_network_catalog())
        mat = pipe.matrix(month_index(2010, 6))
        c = mat.columns.index("region_code")
        assert np.isnan(mat.values[:, c]).all()

    def test_select_subset(self):
        rs = small_registry()
        grid = grid_of(rs)
        pipe = FeaturePipeline(rs, grid)
        mat = pipe.matrix(month_index(2010, 6))
        sub = mat.select(["headcount", "tenure_months"])
        assert sub.columns == ("headcount", "tenure_months")
        assert sub.values[:, 1] == pytest.approx(
            mat.values[:, mat.columns.index("tenure_months")]
        )
        assert sub.labels is mat.labels
        with pytest.raises(RegistryError):
            mat.select(["nope"])

    def test_csv_roundtrip_shape(self):
        rs = small_registry()
        grid = grid_of(rs)
        pipe = FeaturePipeline(rs, grid, no_network_catalog())
        mat = pipe.matrix(month_index(2010, 6))
        lines = mat.to_csv().strip().split("\n")
        assert len(lines) == 1 + len(mat.rows)
        assert lines[0].startswith("person_id,firm_id,month,")
        assert lines[0].endswith(",label")

    def test_truncation_invariance(self):
        """Base features depend only on events at or before the snapshot."""
        from churnet.registry import censor_records
        from churnet.months import snapshot_date

        rs = small_registry()
        m = month_index(2010, 8)
        cut = censor_records(rs, snapshot_date(m))
        g1 = build_temporal_grid(rs, month_index(2010, 1), m)
        g2 = build_temporal_grid(cut, month_index(2010, 1), m)
        mat1 = FeaturePipeline(rs, g1).matrix(m)
        mat2 = FeaturePipeline(cut, g2).matrix(m)
        assert mat1.rows == mat2.rows
        np.testing.assert_allclose(mat1.values, mat2.values, equal_nan=True)
