import numpy as np
import pytest

from churnet.graphs import GraphKind, WeightedGraph
from churnet.propagation import FeatureTable, propagate
from churnet.registry import RegistryError


def make_graph(n, edges, snapshot=0):
    nodes = tuple(f"n{i}" for i in range(n))
    adj = {u: {} for u in nodes}
    for a, b, w in edges:
        adj[f"n{a}"][f"n{b}"] = w
        adj[f"n{b}"][f"n{a}"] = w
    return WeightedGraph(nodes=nodes, adj=adj, snapshot=snapshot, kind=GraphKind.EMPLOYEE_COEMPLOYMENT)


def random_graph(rng, n):
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.4:
                edges.append((a, b, float(rng.random()) + 0.01))
    return make_graph(n, edges)


def dense_oracle(g, table, k):
    """Row-normalized adjacency multiplication on dense matrices (no NaN)."""
    nodes = list(g.nodes)
    idx = {u: i for i, u in enumerate(nodes)}
    n = len(nodes)
    W = np.zeros((n, n))
    for u in nodes:
        for v, w in g.adj[u].items():
            W[idx[u], idx[v]] = w
    X = np.array([table.values[u] for u in nodes], dtype=float)
    row = W.sum(axis=1, keepdims=True)
    for _ in range(k):
        Y = W @ X
        X = np.where(row > 0, Y / np.where(row > 0, row, 1.0), X)
    return {u: X[idx[u]] for u in nodes}


def test_matches_dense_oracle_on_random_graphs():
    rng = np.random.default_rng(5)
    for trial in range(200):
        n = int(rng.integers(1, 13))
        g = random_graph(rng, n)
        table = FeatureTable.from_dict(
            ("a", "b"), {u: rng.normal(size=2) for u in g.nodes}
        )
        for k in (0, 1, 2, 3):
            got = propagate(g, table, k)
            want = dense_oracle(g, table, k)
            for u in g.nodes:
                assert got.values[u] == pytest.approx(want[u], abs=1e-9)


def test_k_zero_is_identity():
    g = make_graph(2, [(0, 1, 1.0)])
    table = FeatureTable.from_dict(("x",), {"n0": [1.0], "n1": [5.0]})
    assert propagate(g, table, 0) is table


def test_two_nodes_swap():
    g = make_graph(2, [(0, 1, 0.7)])
    table = FeatureTable.from_dict(("x",), {"n0": [1.0], "n1": [3.0]})
    out = propagate(g, table, 1)
    assert out.values["n0"][0] == pytest.approx(3.0)
    assert out.values["n1"][0] == pytest.approx(1.0)


def test_self_value_excluded_weighted_average():
    # n1 connected to n0 (w=1) and n2 (w=3)
    g = make_graph(3, [(0, 1, 1.0), (1, 2, 3.0)])
    table = FeatureTable.from_dict(("x",), {"n0": [0.0], "n1": [100.0], "n2": [4.0]})
    out = propagate(g, table, 1)
    assert out.values["n1"][0] == pytest.approx((1.0 * 0.0 + 3.0 * 4.0) / 4.0)


def test_isolated_node_keeps_value():
    g = make_graph(3, [(0, 1, 1.0)])
    table = FeatureTable.from_dict(("x",), {"n0": [1.0], "n1": [2.0], "n2": [9.0]})
    for k in (1, 2, 5):
        assert propagate(g, table, k).values["n2"][0] == 9.0


def test_constant_fixed_point():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 8)
    table = FeatureTable.from_dict(("x",), {u: [2.5] for u in g.nodes})
    out = propagate(g, table, 3)
    for u in g.nodes:
        assert out.values[u][0] == pytest.approx(2.5)


def test_missing_values_dropped_from_both_sides():
    g = make_graph(3, [(0, 1, 1.0), (1, 2, 3.0)])
    table = FeatureTable.from_dict(
        ("x",), {"n0": [np.nan], "n1": [7.0], "n2": [4.0]}
    )
    out = propagate(g, table, 1)
    # n1 averages only over n2 since n0 is missing
    assert out.values["n1"][0] == pytest.approx(4.0)
    # n0's single neighbor has a value, so it adopts it
    assert out.values["n0"][0] == pytest.approx(7.0)


def test_all_neighbors_missing_keeps_previous():
    g = make_graph(2, [(0, 1, 1.0)])
    table = FeatureTable.from_dict(("x",), {"n0": [np.nan], "n1": [3.0]})
    out = propagate(g, table, 1)
    assert out.values["n1"][0] == pytest.approx(3.0)  # neighbor n0 missing -> keep


def test_propagation_invariants_randomized():
    """Range containment, constant fixed point, isolation, linearity."""
    rng = np.random.default_rng(42)
    for trial in range(250):
        n = int(rng.integers(2, 11))
        g = random_graph(rng, n)
        vals_a = {u: rng.normal(size=1) for u in g.nodes}
        vals_b = {u: rng.normal(size=1) for u in g.nodes}
        ta = FeatureTable.from_dict(("x",), vals_a)
        tb = FeatureTable.from_dict(("x",), vals_b)
        k = int(rng.integers(1, 4))
        out_a = propagate(g, ta, k)

        # range containment
        lo = min(v[0] for v in vals_a.values())
        hi = max(v[0] for v in vals_a.values())
        for u in g.nodes:
            assert lo - 1e-9 <= out_a.values[u][0] <= hi + 1e-9

        # constant fixed point
        const = FeatureTable.from_dict(("x",), {u: [1.25] for u in g.nodes})
        for u in g.nodes:
            assert propagate(g, const, k).values[u][0] == pytest.approx(1.25)

        # isolated nodes unchanged
        for u in g.nodes:
            if not g.adj[u]:
                assert out_a.values[u][0] == vals_a[u][0]

        # linearity: P(alpha a + beta b) = alpha P(a) + beta P(b)
        alpha, beta = float(rng.normal()), float(rng.normal())
        mix = FeatureTable.from_dict(
            ("x",), {u: alpha * np.asarray(vals_a[u]) + beta * np.asarray(vals_b[u]) for u in g.nodes}
        )
        out_mix = propagate(g, mix, k)
        out_b = propagate(g, tb, k)
        for u in g.nodes:
            assert out_mix.values[u][0] == pytest.approx(
                alpha * out_a.values[u][0] + beta * out_b.values[u][0], abs=1e-9
            )


def test_missing_graph_node_rejected():
    g = make_graph(2, [(0, 1, 1.0)])
    table = FeatureTable.from_dict(("x",), {"n0": [1.0]})
    with pytest.raises(RegistryError):
        propagate(g, table, 1)


def test_negative_k_rejected():
    g = make_graph(1, [])
    table = FeatureTable.from_dict(("x",), {"n0": [1.0]})
    with pytest.raises(RegistryError):
        propagate(g, table, -1)


def test_extra_nodes_pass_through():
    g = make_graph(2, [(0, 1, 1.0)])
    table = FeatureTable.from_dict(("x",), {"n0": [1.0], "n1": [2.0], "zzz": [8.0]})
    assert propagate(g, table, 2).values["zzz"][0] == 8.0
