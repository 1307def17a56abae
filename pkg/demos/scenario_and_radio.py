"""
The scenario and its radio picture
==================================

Four drones start in the corners of a walled floor plan and have to localise
a beacon at (30, 12).  The only openings in the wall around the beacon are
four gate cells (G), and several patches (D) are GPS-denied.  This script
prints the map, the received signal strength seen from a few cells and the
position error bound for a handful of team formations.

    python demos/scenario_and_radio.py
"""
import numpy as np

from pavlovian_rl.env_grid import CellKind, dump_map, default_map
from pavlovian_rl.rf_channel import LinkBudget, channel_sample, noise_floor_dbm, peb, rss_field

grid = default_map()
print(dump_map(grid))
for kind in CellKind:
    print(f"{kind.name.lower():11s} {len(grid.cells_of_kind(kind)):4d} cells")

# link budget: 0 dBm transmitter at 2.4 GHz, 1 MHz bandwidth, 10 dB noise figure
link = LinkBudget()
print(f"\nnoise floor {noise_floor_dbm(link):.1f} dBm")
for cell in [(29, 12), (27, 12), (26, 10), (20, 12), (10, 20), (2, 16)]:
    ch = channel_sample(grid, link, cell)
    print(f"  from {cell}: d={ch.distance:5.2f} m  {'LOS ' if ch.los else 'NLOS'}  rss={ch.rss:7.2f} dBm")

# the RSS field behind the reward, as a coarse text shading (darker = stronger)
field = rss_field(grid, link).reshape(grid.height, grid.width)
shades = " .:-=+*#%@"
lo, hi = np.nanmin(field), np.nanmax(field)
print()
for y in range(grid.height - 1, -1, -1):
    row = ""
    for x in range(grid.width):
        if grid.cells[y, x] == CellKind.OBSTACLE:
            row += "|"
        else:
            row += shades[int((field[y, x] - lo) / (hi - lo + 1e-9) * (len(shades) - 1))]
    print(row)

# PEB for a few formations; the mission ends once it drops below 1 m
sigma = 6.0
formations = {
    "starts": list(grid.agent_starts),
    "all at the gates": [(26, 10), (26, 11), (26, 15), (26, 16)],
    "inside, spread": [(28, 14), (33, 9), (29, 8), (33, 15)],
    "inside, tight": [(29, 12), (31, 12), (30, 11), (30, 13)],
}
print()
for name, cells in formations.items():
    print(f"PEB {name:18s} {peb(grid, cells, grid.target, link, sigma):9.3f} m")
