"""Linearized (DC) power flow over the electrical graph of a topology.

Angles solve B·theta = P on each connected component with one pinned node;
a line's active flow is b_l·(theta_origin − theta_extremity), b_l = 1/x_l.
Generation is balanced to load before solving by distributing the mismatch
across generators in proportion to p_max.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, electrical_nodes, line_endpoints


class PowerFlowError(Exception):
    """Base class for solver failures."""


class IslandedGridError(PowerFlowError):
    """An injection-hosting node is unreachable from the slack node."""

    def __init__(self, message: str, islanded_loads: tuple[int, ...] = (),
                 islanded_generators: tuple[int, ...] = ()):
        super().__init__(message)
        self.islanded_loads = islanded_loads
        self.islanded_generators = islanded_generators


class SingularMatrixError(PowerFlowError):
    """Degenerate susceptance system (should not occur on valid topologies)."""


@dataclass(frozen=True)
class InjectionProfile:
    """Active power setpoints, per unit: generation and consumption."""

    p_gen: np.ndarray
    p_load: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p_gen", np.asarray(self.p_gen, dtype=np.float64))
        object.__setattr__(self, "p_load", np.asarray(self.p_load, dtype=np.float64))
        if np.any(self.p_load < 0):
            raise ValueError("loads must be non-negative")


@dataclass(frozen=True)
class FlowSolution:
    """Angles, per-line flows and load ratios for one solved snapshot.

    node_index maps (substation, bus) -> position in theta / p_node.
    p_flow is signed, origin -> extremity positive; rho = |p_flow| / limit,
    0 for disconnected lines.
    """

    node_index: dict[tuple[int, int], int]
    theta: np.ndarray
    p_node: np.ndarray          # net injection per node after slack balancing
    p_flow: np.ndarray
    rho: np.ndarray
    connected: np.ndarray       # bool per line
    # line id -> ((sub, bus) origin, (sub, bus) extremity), connected lines only
    line_ends: dict[int, tuple[tuple[int, int], tuple[int, int]]] = field(
        default_factory=dict, compare=False, repr=False)

    def node_balance(self, grid: Grid) -> np.ndarray:
        """Injection minus net outgoing flow at every node (should be ~0)."""
        residual = self.p_node.copy()
        for line_id, (ep_or, ep_ex) in self.line_ends.items():
            flow = self.p_flow[line_id]
            residual[self.node_index[ep_or]] -= flow
            residual[self.node_index[ep_ex]] += flow
        return residual


def balanced_injections(grid: Grid, inj: InjectionProfile) -> np.ndarray:
    """Generator outputs after distributing the gen-load mismatch over p_max."""
    p_gen = inj.p_gen.astype(np.float64).copy()
    mismatch = float(p_gen.sum() - inj.p_load.sum())
    if grid.n_generators == 0:
        if abs(mismatch) > 1e-9:
            raise SingularMatrixError("no generators to absorb the load")
        return p_gen
    p_max = np.array([g.p_max for g in grid.generators], dtype=np.float64)
    total = p_max.sum()
    weights = p_max / total if total > 0 else np.full(grid.n_generators, 1.0 / grid.n_generators)
    return p_gen - mismatch * weights


def solve_dc(grid: Grid, topo: np.ndarray, inj: InjectionProfile) -> FlowSolution:
    """Solve the DC power flow for one topology and injection profile.

    Raises IslandedGridError if a generator or load sits outside the slack
    component (the terminal blackout condition for the environment), and
    SingularMatrixError on a degenerate system.
    """
    if inj.p_gen.shape != (grid.n_generators,) or inj.p_load.shape != (grid.n_loads,):
        raise ValueError("injection profile shape does not match grid")

    nodes = electrical_nodes(grid, topo)
    n = len(nodes)
    theta = np.zeros(n)
    p_node = np.zeros(n)

    p_gen = balanced_injections(grid, inj)
    gen_node = np.empty(grid.n_generators, dtype=np.int64)
    for g in grid.generators:
        gen_node[g.id] = nodes[(g.substation, int(topo[grid.pos_generator(g.id)]))]
        p_node[gen_node[g.id]] += p_gen[g.id]
    load_node = np.empty(grid.n_loads, dtype=np.int64)
    for d in grid.loads:
        load_node[d.id] = nodes[(d.substation, int(topo[grid.pos_load(d.id)]))]
        p_node[load_node[d.id]] -= inj.p_load[d.id]

    # adjacency over connected lines
    line_ends: dict[int, tuple[tuple[int, int], tuple[int, int]]] = {}
    connected = np.zeros(grid.n_lines, dtype=bool)
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for ln in grid.lines:
        ep = line_endpoints(grid, topo, ln.id)
        if ep is None:
            continue
        connected[ln.id] = True
        line_ends[ln.id] = ep
        u, v = nodes[ep[0]], nodes[ep[1]]
        b = 1.0 / ln.reactance
        adj[u].append((v, b))
        adj[v].append((u, b))

    # component labelling
    comp = np.full(n, -1, dtype=np.int64)
    n_comp = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        comp[start] = n_comp
        stack = [start]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if comp[v] < 0:
                    comp[v] = n_comp
                    stack.append(v)
        n_comp += 1

    slack_node = int(gen_node[0]) if grid.n_generators else 0
    slack_comp = comp[slack_node] if n else 0
    stranded_g = tuple(int(g.id) for g in grid.generators if comp[gen_node[g.id]] != slack_comp)
    stranded_d = tuple(int(d.id) for d in grid.loads if comp[load_node[d.id]] != slack_comp)
    if stranded_g or stranded_d:
        raise IslandedGridError(
            f"islanded elements: generators {stranded_g}, loads {stranded_d}",
            islanded_loads=stranded_d, islanded_generators=stranded_g)

    # solve each component with its lowest-index node pinned to angle 0
    for c in range(n_comp):
        members = np.flatnonzero(comp == c)
        if members.size == 1:
            continue
        pin = slack_node if c == slack_comp else int(members[0])
        free = [int(i) for i in members if i != pin]
        pos = {node: k for k, node in enumerate(free)}
        b_mat = np.zeros((len(free), len(free)))
        rhs = np.array([p_node[i] for i in free])
        for i in free:
            k = pos[i]
            for j, b in adj[i]:
                b_mat[k, k] += b
                if j in pos:
                    b_mat[k, pos[j]] -= b
        try:
            sol = np.linalg.solve(b_mat, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(str(exc)) from exc
        if not np.all(np.isfinite(sol)):
            raise SingularMatrixError("non-finite angles")
        for i, val in zip(free, sol):
            theta[i] = val

    p_flow = np.zeros(grid.n_lines)
    rho = np.zeros(grid.n_lines)
    for ln in grid.lines:
        if not connected[ln.id]:
            continue
        ep = line_ends[ln.id]
        u, v = nodes[ep[0]], nodes[ep[1]]
        p_flow[ln.id] = (theta[u] - theta[v]) / ln.reactance
        rho[ln.id] = abs(p_flow[ln.id]) / ln.thermal_limit

    return FlowSolution(nodes, theta, p_node, p_flow, rho, connected, line_ends)


def rho_max(sol: FlowSolution) -> float:
    """Largest load ratio over connected lines; 0 when nothing is connected."""
    if not np.any(sol.connected):
        return 0.0
    return float(sol.rho[sol.connected].max())
