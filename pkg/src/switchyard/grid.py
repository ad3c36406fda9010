"""Static model of a double-busbar power network.

A grid is a set of substations joined by transmission lines; generators and
loads attach to substations.  Every substation has exactly two busbars, and
the *topology vector* records, for every element end (line origin, line
extremity, generator, load), which bus it sits on.  Splitting a substation's
elements across its two buses creates two distinct electrical nodes, which is
the remedial mechanism everything downstream exploits.

Canonical element ordering of the topology vector (fixed for a grid's life):
line origins ascending by line id, then line extremities, then generators,
then loads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Topology vector entries: bus 1, bus 2, or disconnected (lines only).
DISCONNECTED = 0
BUS_1 = 1
BUS_2 = 2

N_BUSBARS = 2  # double busbar; fixed


class GridValidationError(ValueError):
    """Raised when a grid description violates a structural invariant."""


class UnknownLineError(KeyError):
    """Raised when a line id does not exist in the grid."""


@dataclass(frozen=True)
class LineSpec:
    id: int
    origin: int
    extremity: int
    reactance: float       # per unit, > 0
    thermal_limit: float   # per unit flow magnitude, > 0


@dataclass(frozen=True)
class GeneratorSpec:
    id: int
    substation: int
    p_max: float           # per unit, >= 0
    renewable: bool = False


@dataclass(frozen=True)
class LoadSpec:
    id: int
    substation: int


@dataclass(frozen=True)
class Substation:
    """A substation and the element ids attached to it, by element class."""

    id: int
    line_origins: tuple[int, ...] = ()
    line_extremities: tuple[int, ...] = ()
    generators: tuple[int, ...] = ()
    loads: tuple[int, ...] = ()

    @property
    def n_elements(self) -> int:
        return (len(self.line_origins) + len(self.line_extremities)
                + len(self.generators) + len(self.loads))

    @property
    def n_lines(self) -> int:
        return len(self.line_origins) + len(self.line_extremities)

    @property
    def n_injections(self) -> int:
        return len(self.generators) + len(self.loads)


@dataclass(frozen=True)
class Grid:
    """Immutable network description; safe to share across readers.

    Construct via :func:`build_grid`, which derives the per-substation
    attachment tables and validates the invariants.
    """

    name: str
    substations: tuple[Substation, ...]
    lines: tuple[LineSpec, ...]
    generators: tuple[GeneratorSpec, ...]
    loads: tuple[LoadSpec, ...]
    # Optional drawing coordinates, substation id -> (x, y).
    layout: tuple[tuple[float, float], ...] | None = field(default=None, compare=False)

    @property
    def n_substations(self) -> int:
        return len(self.substations)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def n_loads(self) -> int:
        return len(self.loads)

    @property
    def topo_size(self) -> int:
        """Length of the topology vector: 2*N_line + N_gen + N_load."""
        return 2 * self.n_lines + self.n_generators + self.n_loads

    # -- canonical positions -------------------------------------------------

    def pos_line_origin(self, line_id: int) -> int:
        return line_id

    def pos_line_extremity(self, line_id: int) -> int:
        return self.n_lines + line_id

    def pos_generator(self, gen_id: int) -> int:
        return 2 * self.n_lines + gen_id

    def pos_load(self, load_id: int) -> int:
        return 2 * self.n_lines + self.n_generators + load_id

    def substation_positions(self, sub_id: int) -> list[int]:
        """Canonical topology-vector positions of a substation's elements."""
        sub = self.substations[sub_id]
        return ([self.pos_line_origin(l) for l in sub.line_origins]
                + [self.pos_line_extremity(l) for l in sub.line_extremities]
                + [self.pos_generator(g) for g in sub.generators]
                + [self.pos_load(d) for d in sub.loads])

    def position_substation(self) -> np.ndarray:
        """Substation id owning each topology-vector position."""
        owner = np.empty(self.topo_size, dtype=np.int64)
        for ln in self.lines:
            owner[self.pos_line_origin(ln.id)] = ln.origin
            owner[self.pos_line_extremity(ln.id)] = ln.extremity
        for g in self.generators:
            owner[self.pos_generator(g.id)] = g.substation
        for d in self.loads:
            owner[self.pos_load(d.id)] = d.substation
        return owner


def build_grid(name: str,
               n_substations: int,
               lines: list[tuple[int, int, float, float]],
               generators: list[tuple[int, float]] | list[tuple[int, float, bool]],
               loads: list[int],
               layout: list[tuple[float, float]] | None = None) -> Grid:
    """Assemble and validate a Grid.

    lines: (origin, extremity, reactance, thermal_limit) per line, id = index.
    generators: (substation, p_max) or (substation, p_max, renewable).
    loads: substation per load, id = index.
    """
    line_specs = tuple(LineSpec(i, o, e, float(x), float(t))
                       for i, (o, e, x, t) in enumerate(lines))
    gen_specs = []
    for i, g in enumerate(generators):
        sub, p_max = g[0], float(g[1])
        renewable = bool(g[2]) if len(g) > 2 else False
        gen_specs.append(GeneratorSpec(i, sub, p_max, renewable))
    load_specs = tuple(LoadSpec(i, s) for i, s in enumerate(loads))

    _validate(n_substations, line_specs, tuple(gen_specs), load_specs)

    att_or: list[list[int]] = [[] for _ in range(n_substations)]
    att_ex: list[list[int]] = [[] for _ in range(n_substations)]
    att_g: list[list[int]] = [[] for _ in range(n_substations)]
    att_d: list[list[int]] = [[] for _ in range(n_substations)]
    for ln in line_specs:
        att_or[ln.origin].append(ln.id)
        att_ex[ln.extremity].append(ln.id)
    for g in gen_specs:
        att_g[g.substation].append(g.id)
    for d in load_specs:
        att_d[d.substation].append(d.id)

    subs = tuple(Substation(s, tuple(att_or[s]), tuple(att_ex[s]),
                            tuple(att_g[s]), tuple(att_d[s]))
                 for s in range(n_substations))
    lay = tuple((float(x), float(y)) for x, y in layout) if layout is not None else None
    grid = Grid(name, subs, line_specs, tuple(gen_specs), load_specs, lay)
    _check_reference_connectivity(grid)
    return grid


def _validate(n_sub, lines, generators, loads):
    if n_sub < 1:
        raise GridValidationError("grid needs at least one substation")
    for ln in lines:
        if not (0 <= ln.origin < n_sub) or not (0 <= ln.extremity < n_sub):
            raise GridValidationError(f"line {ln.id} references missing substation")
        if ln.origin == ln.extremity:
            raise GridValidationError(f"line {ln.id} is a self loop")
        if ln.reactance <= 0:
            raise GridValidationError(f"line {ln.id} reactance must be > 0")
        if ln.thermal_limit <= 0:
            raise GridValidationError(f"line {ln.id} thermal limit must be > 0")
    for g in generators:
        if not (0 <= g.substation < n_sub):
            raise GridValidationError(f"generator {g.id} references missing substation")
        if g.p_max < 0:
            raise GridValidationError(f"generator {g.id} p_max must be >= 0")
    for d in loads:
        if not (0 <= d.substation < n_sub):
            raise GridValidationError(f"load {d.id} references missing substation")


def _check_reference_connectivity(grid: Grid) -> None:
    """All substations must form one component when every line is in service."""
    if grid.n_substations == 1:
        return
    adj: list[list[int]] = [[] for _ in range(grid.n_substations)]
    for ln in grid.lines:
        adj[ln.origin].append(ln.extremity)
        adj[ln.extremity].append(ln.origin)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != grid.n_substations:
        missing = sorted(set(range(grid.n_substations)) - seen)
        raise GridValidationError(f"substations {missing} unreachable in reference topology")


# ---------------------------------------------------------------------------
# Topology vectors
# ---------------------------------------------------------------------------

def reference_topology(grid: Grid) -> np.ndarray:
    """Everything on bus 1, every line connected."""
    return np.full(grid.topo_size, BUS_1, dtype=np.int8)


def is_reference(grid: Grid, topo: np.ndarray) -> bool:
    return bool(np.all(topo == BUS_1))


def line_connected(grid: Grid, topo: np.ndarray, line_id: int) -> bool:
    if not (0 <= line_id < grid.n_lines):
        raise UnknownLineError(line_id)
    return topo[grid.pos_line_origin(line_id)] != DISCONNECTED


def validate_topology(grid: Grid, topo: np.ndarray) -> None:
    """Check the structural invariants of a topology vector."""
    if topo.shape != (grid.topo_size,):
        raise GridValidationError(
            f"topology vector length {topo.shape} != {(grid.topo_size,)}")
    for g in grid.generators:
        if topo[grid.pos_generator(g.id)] == DISCONNECTED:
            raise GridValidationError(f"generator {g.id} may not be disconnected")
    for d in grid.loads:
        if topo[grid.pos_load(d.id)] == DISCONNECTED:
            raise GridValidationError(f"load {d.id} may not be disconnected")
    for ln in grid.lines:
        a = topo[grid.pos_line_origin(ln.id)]
        b = topo[grid.pos_line_extremity(ln.id)]
        if (a == DISCONNECTED) != (b == DISCONNECTED):
            raise GridValidationError(f"line {ln.id} has exactly one end disconnected")


# ---------------------------------------------------------------------------
# Electrical graph
# ---------------------------------------------------------------------------

def electrical_nodes(grid: Grid, topo: np.ndarray) -> dict[tuple[int, int], int]:
    """Map (substation, bus) -> dense node index, for buses hosting >= 1 element.

    A bus with no elements is not an electrical node; the ordering is by
    (substation, bus), so the mapping is deterministic.
    """
    owner = grid.position_substation()
    present: set[tuple[int, int]] = set()
    for pos in range(grid.topo_size):
        b = int(topo[pos])
        if b != DISCONNECTED:
            present.add((int(owner[pos]), b))
    return {sb: i for i, sb in enumerate(sorted(present))}


def line_endpoints(grid: Grid, topo: np.ndarray, line_id: int) -> tuple[tuple[int, int], tuple[int, int]] | None:
    """((sub, bus) origin, (sub, bus) extremity) of a connected line, else None."""
    a = int(topo[grid.pos_line_origin(line_id)])
    b = int(topo[grid.pos_line_extremity(line_id)])
    if a == DISCONNECTED or b == DISCONNECTED:
        return None
    ln = grid.lines[line_id]
    return (ln.origin, a), (ln.extremity, b)


def is_bridge(grid: Grid, topo: np.ndarray, line_id: int) -> bool:
    """True iff removing the (connected) line splits the electrical graph.

    Nodes are the (substation, bus) pairs hosting at least one element, and
    the node set is recomputed after the removal: a bus left with nothing on
    it is not a node, so dropping a line whose far end sat alone strands
    nothing and is not a bridge cut.
    """
    if not (0 <= line_id < grid.n_lines):
        raise UnknownLineError(line_id)
    if line_endpoints(grid, topo, line_id) is None:
        raise GridValidationError(f"line {line_id} is not connected")
    cut = topo.copy()
    cut[grid.pos_line_origin(line_id)] = DISCONNECTED
    cut[grid.pos_line_extremity(line_id)] = DISCONNECTED
    return len(connected_components(grid, cut)) > len(connected_components(grid, topo))


def connected_components(grid: Grid, topo: np.ndarray) -> list[set[tuple[int, int]]]:
    """Components of the electrical graph, as sets of (substation, bus)."""
    nodes = electrical_nodes(grid, topo)
    index_of = nodes
    rev = {i: sb for sb, i in nodes.items()}
    adj: dict[int, list[int]] = {i: [] for i in nodes.values()}
    for ln in grid.lines:
        ep = line_endpoints(grid, topo, ln.id)
        if ep is None:
            continue
        u, v = index_of[ep[0]], index_of[ep[1]]
        adj[u].append(v)
        adj[v].append(u)
    comps: list[set[tuple[int, int]]] = []
    unseen = set(adj)
    while unseen:
        start = min(unseen)
        comp = {start}
        stack = [start]
        unseen.discard(start)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v in unseen:
                    unseen.discard(v)
                    comp.add(v)
                    stack.append(v)
        comps.append({rev[i] for i in comp})
    return comps
