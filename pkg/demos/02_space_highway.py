"""Space highway versus terrestrial fiber, and small-world shortcuts.

An 8000 km equatorial pair is routed over a 72x22 shell at 550 km and over
100 km fiber spans with 1 ms per hop. The second half adds random ISL
shortcuts to a 24x24 +Grid and watches the hop distance collapse.
"""

import math

import numpy as np

from pleonet.constellation import (
    ConstellationSpec,
    GroundTerminal,
    add_smallworld_shortcuts,
    grid_graph_for,
    topology_metrics,
)
from pleonet.routing import highway_comparison

shell = ConstellationSpec("S", 550.0, 53.0, 72, 22, phase_offset=39)
g = grid_graph_for(shell, 0.0)
print(f"shell: {shell.num_sats} satellites, period {shell.period_s / 60:.1f} min")

a = GroundTerminal("A", 0.0, 0.0)
for km in (500, 2000, 8000, 12000):
    b = GroundTerminal("B", 0.0, math.degrees(km / 6371.0))
    r = highway_comparison(a, b, g, 100.0, 0.001)
    print(f"{km:>6} km: fiber {1e3 * r.terrestrial_delay_s:6.1f} ms ({r.terrestrial_hops} hops), "
          f"space {1e3 * r.space_delay_s:5.1f} ms ({r.space_path.hops} hops) -> {r.winner}")

grid = grid_graph_for(ConstellationSpec("G", 550.0, 53.0, 24, 24, phase_offset=1))
for p in (0.0, 0.01, 0.05, 0.1, 0.2):
    hops = [topology_metrics(add_smallworld_shortcuts(grid, p, s)).avg_hop_distance for s in range(5)]
    print(f"p_shortcut={p:<5}: mean hop distance {np.mean(hops):6.3f}")
