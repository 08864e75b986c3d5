"""Monthly co-employment and firm-mobility graphs.

Employee graphs link professionals simultaneously active at the same firm;
edge weights are total historical co-employment months normalized by the
geometric mean of the two career lengths, so weights lie in (0, 1].
Firm graphs link firms sharing at least one (historical) employee, under a
count, Jaccard, or recency-decayed weighting scheme.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .registry import RecordSet, RegistryError, TemporalGrid


class GraphKind(Enum):
    EMPLOYEE_COEMPLOYMENT = "employee"
    FIRM_MOBILITY = "firm"


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected weighted graph for one monthly snapshot."""

    nodes: tuple[str, ...]
    adj: Mapping[str, Mapping[str, float]]
    snapshot: int
    kind: GraphKind

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return sum(len(nb) for nb in self.adj.values()) // 2

    def weight(self, a: str, b: str) -> Optional[float]:
        return self.adj.get(a, {}).get(b)

    def neighbors(self, a: str) -> Mapping[str, float]:
        return self.adj.get(a, {})


def _graph_from_edges(
    nodes: Iterable[str], edges: Mapping[tuple[str, str], float], snapshot: int, kind: GraphKind
) -> WeightedGraph:
    adj: dict[str, dict[str, float]] = {n: {} for n in nodes}
    for (a, b), w in edges.items():
        if a == b:
            raise RegistryError(f"self-loop on {a!r}")
        if w <= 0:
            raise RegistryError(f"non-positive weight on ({a!r}, {b!r})")
        adj[a][b] = w
        adj[b][a] = w
    return WeightedGraph(nodes=tuple(adj), adj=adj, snapshot=snapshot, kind=kind)


class FirmWeightKind(Enum):
    COUNT = "count"
    JACCARD = "jaccard"
    RECENCY = "recency"


@dataclass(frozen=True)
class FirmWeightScheme:
    kind: FirmWeightKind = FirmWeightKind.COUNT
    recency_lambda: float = 0.05  # 1/month, Recency only

    def __post_init__(self):
        if self.kind is FirmWeightKind.RECENCY and self.recency_lambda <= 0:
            raise RegistryError("recency_lambda must be positive")


def _merge_intervals(spans: list[tuple[int, Optional[int]]]) -> list[tuple[int, Optional[int]]]:
    spans = sorted(spans, key=lambda s: (s[0], math.inf if s[1] is None else s[1]))
    out: list[tuple[int, Optional[int]]] = []
    for lo, hi in spans:
        if out:
            plo, phi = out[-1]
            if phi is None or lo <= phi + 1:
                out[-1] = (plo, None if (phi is None or hi is None) else max(phi, hi))
                continue
        out.append((lo, hi))
    return out


def _co_months(
    a: list[tuple[int, Optional[int]]], b: list[tuple[int, Optional[int]]], m: int
) -> int:
    total = 0
    for lo1, hi1 in a:
        h1 = m if hi1 is None else min(hi1, m)
        for lo2, hi2 in b:
            h2 = m if hi2 is None else min(hi2, m)
            total += max(0, min(h1, h2) - max(lo1, lo2) + 1)
    return total


class EmployeeGraphBuilder:
    """Reusable per-registry index for building monthly employee graphs.

    Precomputes per-person career starts and per-(person, firm) merged month
    intervals so that repeated monthly builds stay cheap.
    """

    def __init__(self, rs: RecordSet):
        self.rs = rs
        self.first_start: dict[str, int] = {}
        self.firm_intervals: dict[str, dict[str, list[tuple[int, Optional[int]]]]] = {}
        raw: dict[str, dict[str, list[tuple[int, Optional[int]]]]] = {}
        for rec in rs.records:
            p = rec.person_id
            fm = rec.first_active_month
            if p not in self.first_start or fm < self.first_start[p]:
                self.first_start[p] = fm
            raw.setdefault(p, {}).setdefault(rec.firm_id, []).append(
                (fm, rec.last_active_month)
            )
        for p, firms in raw.items():
            self.firm_intervals[p] = {f: _merge_intervals(v) for f, v in firms.items()}

    def career_months(self, person: str, m: int) -> int:
        return max(1, m - self.first_start[person] + 1)

    def build(self, grid: TemporalGrid, m: int) -> WeightedGraph:
        if not (grid.start <= m <= grid.end):
            raise RegistryError(f"month {m} outside grid [{grid.start}, {grid.end}]")
        rs = self.rs
        firm_members: dict[str, list[str]] = {}
        current_firms: dict[str, set[str]] = {}
        for i in grid.active[m]:
            rec = rs.records[i]
            cur = current_firms.setdefault(rec.person_id, set())
            if rec.firm_id not in cur:
                cur.add(rec.firm_id)
                firm_members.setdefault(rec.firm_id, []).append(rec.person_id)

        overlaps: dict[tuple[str, str], int] = {}
        # co-employment months at each currently shared firm
        for f, members in firm_members.items():
            members = sorted(members)
            n = len(members)
            if n < 2:
                continue
            ivs = [self.firm_intervals[p][f] for p in members]
            if all(len(iv) == 1 for iv in ivs):
                lo = np.array([iv[0][0] for iv in ivs])
                hi = np.array([m if iv[0][1] is None else min(iv[0][1], m) for iv in ivs])
                ov = np.minimum.outer(hi, hi) - np.maximum.outer(lo, lo) + 1
                iu, ju = np.triu_indices(n, k=1)
                vals = ov[iu, ju]
                for a, b, v in zip(iu.tolist(), ju.tolist(), vals.tolist()):
                    key = (members[a], members[b])
                    overlaps[key] = overlaps.get(key, 0) + max(0, int(v))
            else:
                for a in range(n):
                    for b in range(a + 1, n):
                        key = (members[a], members[b])
                        overlaps[key] = overlaps.get(key, 0) + _co_months(ivs[a], ivs[b], m)

        # historical co-employment at firms not currently shared by the pair
        for (pa, pb) in list(overlaps):
            fa, fb = self.firm_intervals[pa], self.firm_intervals[pb]
            if len(fa) == 1 or len(fb) == 1:
                continue  # the single firm is the current one, already counted
            shared = fa.keys() & fb.keys()
            counted = current_firms[pa] & current_firms[pb]
            for f in shared - counted:
                overlaps[(pa, pb)] += _co_months(fa[f], fb[f], m)

        edges: dict[tuple[str, str], float] = {}
        for (pa, pb), ov in overlaps.items():
            denom = math.sqrt(self.career_months(pa, m) * self.career_months(pb, m))
            edges[(pa, pb)] = max(1, ov) / denom
        return _graph_from_edges(
            sorted(current_firms), edges, snapshot=m, kind=GraphKind.EMPLOYEE_COEMPLOYMENT
        )


def build_employee_graph(grid: TemporalGrid, rs: RecordSet, m: int) -> WeightedGraph:
    """Employee co-employment graph at month m (one-shot convenience)."""
    return EmployeeGraphBuilder(rs).build(grid, m)


def build_firm_graph(
    grid: TemporalGrid, rs: RecordSet, m: int, scheme: FirmWeightScheme = FirmWeightScheme()
) -> WeightedGraph:
    """Firm mobility graph at month m under the given weighting scheme."""
    if not (grid.start <= m <= grid.end):
        raise RegistryError(f"month {m} outside grid [{grid.start}, {grid.end}]")
    active_firms = sorted({rs.records[i].firm_id for i in grid.active[m]})
    active_set = set(active_firms)

    # per person: firms with any spell started by snapshot(m), plus first starts
    person_firms: dict[str, dict[str, int]] = {}
    for rec in rs.records:
        sm = rec.first_active_month
        if sm > m:
            continue
        firms = person_firms.setdefault(rec.person_id, {})
        if rec.firm_id not in firms or sm < firms[rec.firm_id]:
            firms[rec.firm_id] = sm

    rosters: dict[str, int] = {}
    for firms in person_firms.values():
        for f in firms:
            rosters[f] = rosters.get(f, 0) + 1

    shared: dict[tuple[str, str], int] = {}
    recency: dict[tuple[str, str], float] = {}
    lam = scheme.recency_lambda
    for firms in person_firms.values():
        eligible = sorted(f for f in firms if f in active_set)
        for i in range(len(eligible)):
            for j in range(i + 1, len(eligible)):
                key = (eligible[i], eligible[j])
                shared[key] = shared.get(key, 0) + 1
                if scheme.kind is FirmWeightKind.RECENCY:
                    t = max(firms[eligible[i]], firms[eligible[j]])
                    recency[key] = recency.get(key, 0.0) + math.exp(-lam * (m - t))

    edges: dict[tuple[str, str], float] = {}
    for key, count in shared.items():
        if scheme.kind is FirmWeightKind.COUNT:
            edges[key] = float(count)
        elif scheme.kind is FirmWeightKind.JACCARD:
            union = rosters[key[0]] + rosters[key[1]] - count
            edges[key] = count / union
        else:
            edges[key] = recency[key]
    return _graph_from_edges(active_firms, edges, snapshot=m, kind=GraphKind.FIRM_MOBILITY)


@dataclass(frozen=True)
class GraphMetrics:
    n_nodes: int
    n_edges: int
    mean_degree: Optional[float]
    global_clustering: Optional[float]
    n_components: int
    giant_component_share: Optional[float]
    degree_histogram: Mapping[int, int]
    avg_path_length_sampled: Optional[float]

    def as_dict(self) -> dict:
        d = {
            "n_nodes": self.n_nodes,
            "n_edges": self.n_edges,
            "mean_degree": self.mean_degree,
            "global_clustering": self.global_clustering,
            "n_components": self.n_components,
            "giant_component_share": self.giant_component_share,
            "degree_histogram": {str(k): v for k, v in sorted(self.degree_histogram.items())},
            "avg_path_length_sampled": self.avg_path_length_sampled,
        }
        return d


def _components(g: WeightedGraph) -> list[list[str]]:
    seen: set[str] = set()
    comps = []
    for start in g.nodes:
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        q = deque([start])
        while q:
            u = q.popleft()
            for v in g.adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    q.append(v)
        comps.append(comp)
    return comps


def graph_metrics(g: WeightedGraph, path_samples: int = 64, seed: int = 0) -> GraphMetrics:
    """Descriptive statistics; weights are ignored throughout.

    Clustering is the global transitivity 3*triangles/triples; the average
    path length is estimated from ``path_samples`` seeded BFS sources inside
    the giant component.
    """
    if path_samples < 0:
        raise RegistryError("path_samples must be >= 0")
    n = g.n_nodes
    if n == 0:
        return GraphMetrics(0, 0, None, None, 0, None, {}, None)

    degs = {u: len(g.adj[u]) for u in g.nodes}
    hist: dict[int, int] = {}
    for d in degs.values():
        hist[d] = hist.get(d, 0) + 1

    triples = sum(d * (d - 1) // 2 for d in degs.values())
    triangles = 0
    for u in g.nodes:
        nb = g.adj[u]
        for v in nb:
            if v <= u:
                continue
            for w in g.adj[v]:
                if w > v and w in nb:
                    triangles += 1
    clustering = (3 * triangles / triples) if triples else None

    comps = _components(g)
    giant = max(comps, key=len)
    share = len(giant) / n

    avg_path = None
    if path_samples > 0 and len(giant) > 1:
        rng = np.random.default_rng(seed)
        giant_sorted = sorted(giant)
        k = min(path_samples, len(giant_sorted))
        sources = [giant_sorted[i] for i in rng.choice(len(giant_sorted), size=k, replace=False)]
        means = []
        for s in sources:
            dist = {s: 0}
            q = deque([s])
            while q:
                u = q.popleft()
                for v in g.adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        q.append(v)
            means.append(sum(dist.values()) / (len(dist) - 1))
        avg_path = float(np.mean(means))

    return GraphMetrics(
        n_nodes=n,
        n_edges=g.n_edges,
        mean_degree=2 * g.n_edges / n,
        global_clustering=clustering,
        n_components=len(comps),
        giant_component_share=share,
        degree_histogram=hist,
        avg_path_length_sampled=avg_path,
    )


def modularity(g: WeightedGraph, partition: Mapping[str, int]) -> float:
    """Weighted Newman modularity of a node partition."""
    m2 = 0.0  # 2m = sum of weighted degrees
    w_in: dict[int, float] = {}
    d_tot: dict[int, float] = {}
    for u in g.nodes:
        cu = partition[u]
        ku = sum(g.adj[u].values())
        d_tot[cu] = d_tot.get(cu, 0.0) + ku
        m2 += ku
        for v, w in g.adj[u].items():
            if partition[v] == cu:
                w_in[cu] = w_in.get(cu, 0.0) + w  # counts each edge twice
    if m2 == 0:
        return 0.0
    q = 0.0
    for c, d in d_tot.items():
        q += w_in.get(c, 0.0) / m2 - (d / m2) ** 2
    return q


def louvain_communities(g: WeightedGraph, seed: int = 0) -> tuple[dict[str, int], float]:
    """Louvain partition of a weighted graph with a seeded visiting order.

    Returns (node -> community id, modularity of that partition); community
    ids are consecutive integers ordered by first appearance over sorted
    node order.  Deterministic for a fixed seed.
    """
    if g.n_nodes == 0:
        raise RegistryError("louvain on empty graph")
    rng = np.random.default_rng(seed)

    # generic adjacency with possible self-loops for aggregated levels
    nodes: list = sorted(g.nodes)
    adj: dict = {u: dict(g.adj[u]) for u in nodes}
    mapping = {u: u for u in g.nodes}  # original node -> current-level node

    while True:
        comm = {u: i for i, u in enumerate(nodes)}
        k = {u: sum(w for v, w in adj[u].items()) + adj[u].get(u, 0.0) for u in nodes}
        m2 = sum(k.values())
        if m2 == 0:
            break
        d_tot = {comm[u]: k[u] for u in nodes}

        order = list(nodes)
        idx = rng.permutation(len(order))
        order = [order[i] for i in idx]

        improved_level = False
        while True:
            moved = False
            for u in order:
                cu = comm[u]
                ku = k[u]
                # weight from u to each neighboring community (self excluded)
                w_to: dict[int, float] = {}
                for v, w in adj[u].items():
                    if v == u:
                        continue
                    w_to[comm[v]] = w_to.get(comm[v], 0.0) + w
                d_tot[cu] -= ku
                best_c, best_gain = cu, w_to.get(cu, 0.0) - d_tot[cu] * ku / m2
                for c in sorted(w_to):
                    gain = w_to[c] - d_tot.get(c, 0.0) * ku / m2
                    if gain > best_gain + 1e-12:
                        best_c, best_gain = c, gain
                d_tot[best_c] = d_tot.get(best_c, 0.0) + ku
                if best_c != cu:
                    comm[u] = best_c
                    moved = True
                    improved_level = True
            if not moved:
                break

        if not improved_level:
            break

        # aggregate communities into super-nodes
        groups: dict[int, list] = {}
        for u in nodes:
            groups.setdefault(comm[u], []).append(u)
        new_nodes = sorted(groups)
        new_adj: dict = {c: {} for c in new_nodes}
        for u in nodes:
            cu = comm[u]
            for v, w in adj[u].items():
                cv = comm[v]
                if cu == cv:
                    # each intra edge seen twice; self-loop stores full weight once
                    new_adj[cu][cu] = new_adj[cu].get(cu, 0.0) + w / 2
                else:
                    new_adj[cu][cv] = new_adj[cu].get(cv, 0.0) + w
        mapping = {orig: comm[cur] for orig, cur in mapping.items()}
        if len(new_nodes) == len(nodes):
            break
        nodes, adj = new_nodes, new_adj

    # relabel communities by first appearance over sorted original nodes
    relabel: dict = {}
    partition: dict[str, int] = {}
    for u in sorted(g.nodes):
        c = mapping[u]
        if c not in relabel:
            relabel[c] = len(relabel)
        partition[u] = relabel[c]
    return partition, modularity(g, partition)


def export_graph_csv(g: WeightedGraph) -> tuple[str, str]:
    """(edge-list CSV, node-list CSV) for a graph."""
    ebuf = io.StringIO()
    ew = csv.writer(ebuf, lineterminator="\n")
    ew.writerow(["src", "dst", "weight"])
    for u in sorted(g.adj):
        for v in sorted(g.adj[u]):
            if u < v:
                ew.writerow([u, v, repr(g.adj[u][v])])
    nbuf = io.StringIO()
    nw = csv.writer(nbuf, lineterminator="\n")
    nw.writerow(["node"])
    for u in sorted(g.nodes):
        nw.writerow([u])
    return ebuf.getvalue(), nbuf.getvalue()
