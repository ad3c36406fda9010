"""Discrete topology actions: counting, enumeration, validation, reduction.

A substation reconfiguration assigns each attached element to bus 1 or 2.
An assignment is *valid* when every bus hosting at least one generator or
load also hosts at least one line (an injection may never sit alone), and
*canonical* when the element with the lowest canonical position sits on
bus 1, which quotients out the bus-swap symmetry.  The closed-form count of
valid canonical assignments for a substation with N_line line ends, N_g
generators and N_load loads is

    2**(N_tot - 1) - 2**(N_g + N_load) + 1,     N_tot = N_line + N_g + N_load.

The reduced action set keeps the highest-impact reconfigurations, scored by
one-step relief of the worst line load over states sampled from do-nothing
rollouts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import (BUS_1, DISCONNECTED, Grid, Substation, connected_components,
                   reference_topology)


class TooManyElementsError(ValueError):
    """Substation too large to enumerate exhaustively."""


ENUMERATION_LIMIT = 20  # elements per substation


# ---------------------------------------------------------------------------
# Action variants (the environment's discrete control grammar)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoNothing:
    kind: str = field(default="do_nothing", init=False)


@dataclass(frozen=True)
class SubstationAction:
    """Target bus for every element attached to one substation.

    ``assignment`` follows the substation's canonical element order
    (line origins, line extremities, generators, loads; ids ascending).
    """

    substation: int
    assignment: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (1, 2) for b in self.assignment):
            raise ValueError("assignment buses must be 1 or 2")


@dataclass(frozen=True)
class SetSubstation:
    action: SubstationAction
    kind: str = field(default="set_substation", init=False)


@dataclass(frozen=True)
class ReconnectLine:
    line: int
    bus_origin: int = BUS_1
    bus_extremity: int = BUS_1
    kind: str = field(default="reconnect_line", init=False)


@dataclass(frozen=True)
class DisconnectLine:
    line: int
    kind: str = field(default="disconnect_line", init=False)


Action = DoNothing | SetSubstation | ReconnectLine | DisconnectLine

DO_NOTHING = DoNothing()


def action_to_dict(action: Action) -> dict:
    if isinstance(action, DoNothing):
        return {"kind": "do_nothing"}
    if isinstance(action, SetSubstation):
        return {"kind": "set_substation",
                "substation": action.action.substation,
                "assignment": list(action.action.assignment)}
    if isinstance(action, ReconnectLine):
        return {"kind": "reconnect_line", "line": action.line,
                "bus_origin": action.bus_origin, "bus_extremity": action.bus_extremity}
    if isinstance(action, DisconnectLine):
        return {"kind": "disconnect_line", "line": action.line}
    raise TypeError(f"not an action: {action!r}")


def action_from_dict(payload: dict) -> Action:
    kind = payload.get("kind")
    if kind == "do_nothing":
        return DO_NOTHING
    if kind == "set_substation":
        return SetSubstation(SubstationAction(int(payload["substation"]),
                                              tuple(int(b) for b in payload["assignment"])))
    if kind == "reconnect_line":
        return ReconnectLine(int(payload["line"]),
                             int(payload.get("bus_origin", 1)),
                             int(payload.get("bus_extremity", 1)))
    if kind == "disconnect_line":
        return DisconnectLine(int(payload["line"]))
    raise ValueError(f"unknown action kind: {kind!r}")


# ---------------------------------------------------------------------------
# Counting and enumeration
# ---------------------------------------------------------------------------

def count_valid_topologies(n_line: int, n_gen: int, n_load: int) -> int:
    """Valid double-busbar reconfigurations of a substation, exactly.

    Python integers are arbitrary precision, so the count is exact for any
    size (no overflow case exists).
    """
    if n_line < 1:
        raise ValueError("a substation must host at least one line end")
    if n_gen < 0 or n_load < 0:
        raise ValueError("element counts must be non-negative")
    n_tot = n_line + n_gen + n_load
    return 2 ** (n_tot - 1) - 2 ** (n_gen + n_load) + 1


def _assignment_valid(buses: tuple[int, ...], n_lines: int) -> bool:
    # positions [0, n_lines) are line ends, the rest are injections
    for bus in (1, 2):
        has_injection = any(b == bus for b in buses[n_lines:])
        if has_injection and not any(b == bus for b in buses[:n_lines]):
            return False
    return True


def enumerate_valid_topologies(sub: Substation) -> list[SubstationAction]:
    """All valid canonical assignments for one substation.

    The first element (lowest canonical position) is pinned to bus 1, so the
    list has exactly ``count_valid_topologies`` members and no duplicates.
    """
    n = sub.n_elements
    if n > ENUMERATION_LIMIT:
        raise TooManyElementsError(
            f"substation {sub.id} has {n} elements (limit {ENUMERATION_LIMIT})")
    if sub.n_lines < 1:
        raise ValueError(f"substation {sub.id} hosts no line end")
    out = []
    for mask in range(2 ** (n - 1)):
        buses = (1,) + tuple(2 if (mask >> i) & 1 else 1 for i in range(n - 1))
        if _assignment_valid(buses, sub.n_lines):
            out.append(SubstationAction(sub.id, buses))
    return out


# ---------------------------------------------------------------------------
# Applying actions to topology vectors
# ---------------------------------------------------------------------------

class InvalidActionError(ValueError):
    """Action violates the bus-validity rule or targets a missing element."""


def apply_substation_action(grid: Grid, topo: np.ndarray,
                            action: SubstationAction) -> np.ndarray:
    """Re-bus a substation's connected elements; disconnected ends stay put.

    Raises InvalidActionError when, over the *connected* elements, a bus
    would host injections without any line.
    """
    positions = grid.substation_positions(action.substation)
    if len(positions) != len(action.assignment):
        raise InvalidActionError(
            f"assignment length {len(action.assignment)} != "
            f"{len(positions)} elements at substation {action.substation}")
    sub = grid.substations[action.substation]
    n_lines = sub.n_lines
    new_topo = topo.copy()
    effective = []
    for k, pos in enumerate(positions):
        if topo[pos] == DISCONNECTED:
            effective.append(DISCONNECTED)
            continue
        new_topo[pos] = action.assignment[k]
        effective.append(action.assignment[k])
    for bus in (1, 2):
        has_injection = any(b == bus for b in effective[n_lines:])
        has_line = any(b == bus for b in effective[:n_lines])
        if has_injection and not has_line:
            raise InvalidActionError(
                f"substation {action.substation}: bus {bus} would host "
                f"injections without a line")
    return new_topo


def bifurcates_reference(grid: Grid, action: SubstationAction) -> bool:
    """True when applying the action to the reference topology splits the grid."""
    try:
        topo = apply_substation_action(grid, reference_topology(grid), action)
    except InvalidActionError:
        return True
    return len(connected_components(grid, topo)) > 1


# ---------------------------------------------------------------------------
# Reduced action set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionEntry:
    action: Action
    substation: int | None      # None for do-nothing
    impact: float


class ActionSet:
    """Ordered, duplicate-free action list; index 0 is always do-nothing."""

    def __init__(self, entries: list[ActionEntry]):
        if not entries or not isinstance(entries[0].action, DoNothing):
            entries = [ActionEntry(DO_NOTHING, None, 0.0)] + list(entries)
        seen = set()
        for e in entries:
            if e.action in seen:
                raise ValueError(f"duplicate action: {e.action!r}")
            seen.add(e.action)
        self.entries: tuple[ActionEntry, ...] = tuple(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> ActionEntry:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ActionSet) and self.entries == other.entries

    def action(self, i: int) -> Action:
        return self.entries[i].action

    def index_of(self, action: Action) -> int:
        for i, e in enumerate(self.entries):
            if e.action == action:
                return i
        raise KeyError(action)


def candidate_substation_actions(grid: Grid) -> list[SubstationAction]:
    """Every valid, non-bifurcating substation reconfiguration of the grid.

    Substations above the enumeration limit are skipped (they cannot be
    enumerated exhaustively anyway).
    """
    pool: list[SubstationAction] = []
    for sub in grid.substations:
        if sub.n_elements > ENUMERATION_LIMIT or sub.n_lines < 1:
            continue
        for act in enumerate_valid_topologies(sub):
            if not bifurcates_reference(grid, act):
                pool.append(act)
    return pool


def reduce_action_space(grid: Grid, chronics: list, budget: int,
                        seed: int = 0, stress_rho: float = 0.95,
                        max_states: int = 64) -> ActionSet:
    """Keep the ``budget`` highest-impact reconfigurations.

    Impact of an action is the mean, over stressed states sampled from
    do-nothing rollouts through ``chronics``, of the drop in worst-line load
    it would cause one step ahead (clamped at zero per state).  Deterministic
    for a fixed (grid, chronics, seed).
    """
    from .environment import EnvConfig, GridEnv  # circular at import time only

    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not chronics:
        raise ValueError("need at least one chronic")

    pool = candidate_substation_actions(grid)
    relief: dict[SubstationAction, list[float]] = {a: [] for a in pool}
    states_seen = 0

    for k, chronic in enumerate(chronics):
        if states_seen >= max_states:
            break
        env = GridEnv(grid, chronic, EnvConfig(), seed=seed + k)
        env.reset()
        while not env.done and states_seen < max_states:
            _, rho_dn, feasible = env.simulate(DO_NOTHING)
            if feasible and rho_dn >= stress_rho:
                states_seen += 1
                for act in pool:
                    _, rho_a, ok = env.simulate(SetSubstation(act))
                    drop = max(0.0, rho_dn - rho_a) if ok else 0.0
                    relief[act].append(drop)
            env.step(DO_NOTHING)

    if states_seen == 0:
        warnings.warn("no overloaded states sampled; ranking by substation size",
                      stacklevel=2)
        ranked = sorted(pool, key=lambda a: (-grid.substations[a.substation].n_elements,
                                             a.substation, a.assignment))
        scored = [(a, 0.0) for a in ranked]
    else:
        scored = [(a, float(np.mean(relief[a])) if relief[a] else 0.0) for a in pool]
        scored.sort(key=lambda pair: (-pair[1], pair[0].substation, pair[0].assignment))

    entries = [ActionEntry(SetSubstation(a), a.substation, impact)
               for a, impact in scored[:budget]]
    return ActionSet(entries)
