"""Build a small grid, solve its DC power flow, and watch a bus split
reroute an overload.

Run:  python3 demos/01_grid_and_power_flow.py
"""

import numpy as np

from switchyard.actions import SetSubstation, SubstationAction, apply_substation_action
from switchyard.fixtures import training_grid
from switchyard.grid import DISCONNECTED, reference_topology
from switchyard.power_flow import InjectionProfile, rho_max, solve_dc

grid = training_grid()
print(f"grid {grid.name}: {grid.n_substations} substations, {grid.n_lines} lines, "
      f"{grid.n_generators} generators, {grid.n_loads} loads")

# a stressed evening: every load near the daily peak
p_load = np.full(grid.n_loads, 0.95)
p_max = np.array([g.p_max for g in grid.generators])
inj = InjectionProfile(p_load.sum() * p_max / p_max.sum(), p_load)

topo = reference_topology(grid)
sol = solve_dc(grid, topo, inj)
print("\nreference topology, all on bus 1:")
for ln in grid.lines:
    print(f"  line {ln.id} ({ln.origin}->{ln.extremity}): "
          f"flow {sol.p_flow[ln.id]:+.3f}, rho {sol.rho[ln.id]:.3f}")
print(f"  worst ratio: {rho_max(sol):.3f}")

# lose line 1 (substation 0 to 2): the detour overloads
outage = topo.copy()
outage[grid.pos_line_origin(1)] = DISCONNECTED
outage[grid.pos_line_extremity(1)] = DISCONNECTED
sol_out = solve_dc(grid, outage, inj)
print(f"\nafter losing line 1: worst ratio {rho_max(sol_out):.3f} "
      f"(line {int(np.argmax(sol_out.rho))})")

# remedial bus split at substation 1: line 3 (to sub 3) and line 8 (to sub 4)
# move to busbar 2, which re-balances the detour paths
split = SubstationAction(1, (1, 1, 2, 2, 1))
relieved = apply_substation_action(grid, outage, split)
sol_fix = solve_dc(grid, relieved, inj)
print(f"after splitting substation 1: worst ratio {rho_max(sol_fix):.3f}")

