"""Plant a peer-contagion effect and recover it.

The generator multiplies an agent's departure hazard by (1 + boost) whenever
more than `contagion_threshold` of their window-start co-workers departed
during the trailing window. `threshold_analysis` then measures conditional
turnover above each threshold without knowing the planted parameters.
"""

from churnet.contagion import ContagionConfig, threshold_analysis
from churnet.registry import build_temporal_grid
from churnet.synth import SIM_EPOCH, MarketConfig, describe_ground_truth, generate_market

cfg = MarketConfig(
    n_agents=4000,
    n_firms=40,
    months=60,
    base_hazard=0.03,
    contagion_threshold=0.30,
    contagion_boost=0.8,
    window_months=6,
    seed=11,
)
print("planted ground truth:", describe_ground_truth(cfg)["planted"], "\n")

rs = generate_market(cfg)
grid = build_temporal_grid(rs, SIM_EPOCH, SIM_EPOCH + cfg.months - 1)
report = threshold_analysis(grid, rs, ContagionConfig(window_months=6))

print(f"{'threshold':>9} {'n_above':>8} {'rate_above':>11} {'lift':>8}")
for row in report.rows:
    lift = "undef" if row.relative_lift is None else f"{row.relative_lift:+.3f}"
    rate = "undef" if row.turnover_rate_above is None else f"{row.turnover_rate_above:.4f}"
    print(f"{row.threshold:>9.1f} {row.n_above:>8} {rate:>11} {lift:>8}")
print(f"\nbaseline turnover rate: {report.baseline_rate:.4f}")
print("lift jumps once the threshold crosses the planted 0.30 — the contagion "
      "is\nrecovered, not assumed. Rows past ~0.5 rest on a handful of "
      "person-months\nand are pure sampling noise.")
