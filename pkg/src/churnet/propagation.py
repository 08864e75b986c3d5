"""Weighted-average feature propagation over a snapshot graph.

Each iteration replaces a node's feature vector by the weight-normalized
average of its neighbors' vectors from the previous iteration:

    f'_i = sum_{j in N(i)} w_ij f_j / sum_{j in N(i)} w_ij

Updates are synchronous (every node reads the previous iterate), the node's
own value is excluded, and missing entries (NaN) are dropped from both the
numerator and the denominator per feature.  Nodes with no neighbors, or
whose neighbors are all missing a feature, keep their previous value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graphs import WeightedGraph
from .registry import RegistryError


@dataclass(frozen=True)
class FeatureTable:
    """Per-node feature vectors; NaN marks a missing value."""

    feature_names: tuple[str, ...]
    values: Mapping[str, np.ndarray]

    def __post_init__(self):
        k = len(self.feature_names)
        for node, vec in self.values.items():
            if vec.shape != (k,):
                raise RegistryError(
                    f"vector for {node!r} has shape {vec.shape}, expected ({k},)"
                )

    @classmethod
    def from_dict(cls, feature_names: Sequence[str], data: Mapping[str, Sequence[float]]):
        return cls(
            feature_names=tuple(feature_names),
            values={n: np.asarray(v, dtype=float) for n, v in data.items()},
        )


def propagate(g: WeightedGraph, f: FeatureTable, k: int = 1) -> FeatureTable:
    """Run k synchronous propagation iterations over the graph."""
    if k < 0:
        raise RegistryError(f"negative iteration count {k}")
    for node in g.nodes:
        if node not in f.values:
            raise RegistryError(f"feature table missing graph node {node!r}")
    if k == 0:
        return f

    nodes = list(g.nodes)
    index = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    nf = len(f.feature_names)
    cur = np.empty((n, nf), dtype=float)
    for node, i in index.items():
        cur[i] = f.values[node]

    src, dst, wts = [], [], []
    for u in nodes:
        iu = index[u]
        for v, w in g.adj[u].items():
            src.append(iu)
            dst.append(index[v])
            wts.append(w)
    src_a = np.asarray(src, dtype=np.intp)
    dst_a = np.asarray(dst, dtype=np.intp)
    w_a = np.asarray(wts, dtype=float)

    for _ in range(k):
        num = np.zeros((n, nf))
        den = np.zeros((n, nf))
        if len(src_a):
            neigh = cur[dst_a]
            ok = ~np.isnan(neigh)
            contrib = np.where(ok, neigh, 0.0) * w_a[:, None]
            np.add.at(num, src_a, contrib)
            np.add.at(den, src_a, ok * w_a[:, None])
        nxt = np.where(den > 0, num / np.where(den > 0, den, 1.0), cur)
        cur = nxt

    out = {node: cur[i].copy() for node, i in index.items()}
    # nodes absent from the graph pass through untouched
    for node, vec in f.values.items():
        if node not in index:
            out[node] = np.array(vec, dtype=float)
    return FeatureTable(feature_names=f.feature_names, values=out)
