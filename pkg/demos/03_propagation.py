"""Feature propagation: each node takes the weighted average of its
neighbors' values; missing values drop out of the average; isolated nodes
keep their own value. Iterating k times mixes information k hops out.
"""

import numpy as np

from churnet.graphs import GraphKind, WeightedGraph
from churnet.propagation import FeatureTable, propagate

# star: hub H connected to A (weight 1) and B (weight 3); L is isolated
adj = {
    "H": {"A": 1.0, "B": 3.0},
    "A": {"H": 1.0},
    "B": {"H": 3.0},
    "L": {},
}
g = WeightedGraph(nodes=("H", "A", "B", "L"), adj=adj, snapshot=0,
                  kind=GraphKind.EMPLOYEE_COEMPLOYMENT)

table = FeatureTable.from_dict(
    ["tenure", "score"],
    {
        "H": [10.0, 0.5],
        "A": [0.0, np.nan],  # score unknown for A
        "B": [4.0, 0.9],
        "L": [7.0, 0.1],
    },
)

print(f"{'node':<6} {'tenure':>8} {'score':>8}")
for k in range(3):
    out = propagate(g, table, k)
    print(f"k={k}")
    for node in g.nodes:
        t, s = out.values[node]
        print(f"  {node:<4} {t:8.3f} {s:8.3f}")

print(
    "\nAt k=1 the hub averages its neighbors (tenure (0*1 + 4*3)/4 = 3.0); "
    "A's\nmissing score is skipped in every average it would enter, and the "
    "isolated\nnode L never changes."
)
