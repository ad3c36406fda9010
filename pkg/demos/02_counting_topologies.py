"""How many ways can a double-busbar substation be reconfigured?

The closed form 2**(N-1) - 2**(N_g + N_load) + 1 counts assignments where no
busbar is left holding a generator or load without a line, up to swapping the
two (interchangeable) busbars.

Run:  python3 demos/02_counting_topologies.py
"""

from switchyard.actions import count_valid_topologies, enumerate_valid_topologies
from switchyard.fixtures import training_grid
from switchyard.grid import Substation

print("valid reconfigurations by substation shape:")
for n_line, n_gen, n_load in [(2, 0, 0), (3, 1, 1), (6, 2, 1), (12, 4, 1)]:
    count = count_valid_topologies(n_line, n_gen, n_load)
    print(f"  {n_line} line ends, {n_gen} generators, {n_load} loads -> {count:,}")

print("\nthe 13 configurations of a (3 lines, 1 generator, 1 load) substation:")
sub = Substation(0, (0, 1, 2), (), (0,), (0,))
for action in enumerate_valid_topologies(sub):
    tags = ["L0", "L1", "L2", "G", "D"]
    bus1 = [t for t, b in zip(tags, action.assignment) if b == 1]
    bus2 = [t for t, b in zip(tags, action.assignment) if b == 2]
    print(f"  bus1={','.join(bus1):12} bus2={','.join(bus2) or '-'}")

grid = training_grid()
total = sum(count_valid_topologies(s.n_lines, len(s.generators), len(s.loads))
            for s in grid.substations)
print(f"\nwhole {grid.name} grid: {total} per-substation configurations "
      f"before reduction")
