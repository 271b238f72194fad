"""Multipath transport over disjoint routes.

Splits a session over k link-disjoint paths with the delay-optimal MPTCP
rule, then compares delivery under random link failures for a single path,
two disjoint paths and opportunistic relaying.
"""

from pleonet.constellation import ConstellationSpec, GroundTerminal, attach_terminals, grid_graph_for
from pleonet.routing import FailureModel, k_disjoint_paths, mptcp_optimal_split, resilience_eval

shell = ConstellationSpec("S", 550.0, 53.0, 24, 22, phase_offset=13)
g = attach_terminals(grid_graph_for(shell), [GroundTerminal("lon", 51.5, -0.1),
                                             GroundTerminal("nyc", 40.7, -74.0)])

ps = k_disjoint_paths(g, "lon", "nyc", 3, session_id="atlantic")
for p in ps.paths:
    print(f"path: {p.hops} hops, {1e3 * p.delay_s:.2f} ms, bottleneck {p.bottleneck_capacity_bps / 1e9:.1f} Gbps")

for demand in (0.5e9, 1.5e9, 2.5e9):
    fa = mptcp_optimal_split(ps, demand, 12000)
    split = ", ".join(f"{f / 1e6:.0f}" for f in fa.splits_bps)
    print(f"demand {demand / 1e9:.1f} Gbps -> split [{split}] Mbps, mean delay {1e3 * fa.mean_delay_s:.3f} ms")

for p in (0.01, 0.05, 0.1):
    fm = FailureModel(link_failure_prob=p, seed=1)
    res = {s: resilience_eval(g, "lon", "nyc", s, fm, 2000).delivery_ratio
           for s in ("single_path", "k_disjoint(2)", "opportunistic(2)")}
    print(f"p={p:<4} " + "  ".join(f"{k}={v:.3f}" for k, v in res.items()))
