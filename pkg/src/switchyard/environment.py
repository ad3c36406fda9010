"""Episode simulation: chronics-driven injections, action legality, cooldowns,
maintenance, overflow trips, an adversarial opponent, reward and termination.

One instance is single-threaded; clones are cheap and fully isolated, which
is what `simulate` (the what-if capability) relies on.

Step processing order (fixed):
  1. legality check (cooldown / maintenance violations convert the action to
     do-nothing and flag it),
  2. apply the action and start cooldowns,
  3. apply maintenance starts from the chronic,
  4. opponent may force-disconnect a target line,
  5. advance injections to the next chronic row,
  6. solve the power flow,
  7. overflow bookkeeping and auto-disconnections,
  8. re-solve if anything tripped,
  9. step reward,
 10. termination check (terminal bonus / penalty).

Timer convention: a cooldown of c started at step k blocks the element for
the next c calls (k+1 .. k+c); observation timers report the remaining
blocked calls.  A forced outage window (maintenance or attack) covering
chronic indices [s, s+d) rejects reconnection exactly while the index being
entered lies inside the window.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .actions import (Action, DO_NOTHING, DisconnectLine, DoNothing,
                      InvalidActionError, ReconnectLine, SetSubstation,
                      apply_substation_action)
from .grid import BUS_1, DISCONNECTED, Grid
from .power_flow import (InjectionProfile, IslandedGridError, PowerFlowError,
                         rho_max, solve_dc)
from .scenario import Chronic, validate_chronic_refs

REWARD_SAFE_RHO = 0.95

SURVIVED = "survived"
BLACKOUT = "blackout"
LOAD_NOT_SERVED = "load_not_served"
ILLEGAL_CASCADE = "illegal_action_cascade"


class EpisodeDoneError(RuntimeError):
    """step/simulate called on a finished episode."""


class InfeasibleInitialStateError(RuntimeError):
    """The chronic's first row does not admit a feasible flow."""


def step_reward(rho_max_value: float) -> float:
    """Per-step operating reward: 2 − ρmax below 0.95, else 2 − 2·ρmax."""
    if rho_max_value < REWARD_SAFE_RHO:
        return 2.0 - rho_max_value
    return 2.0 - 2.0 * rho_max_value


@dataclass(frozen=True)
class EnvConfig:
    overflow_steps_to_disconnect: int = 3
    hard_overflow_rho: float = 2.0
    line_cooldown: int = 3
    substation_cooldown: int = 3
    reconnect_cooldown_after_trip: int = 12
    survive_bonus: float = 500.0
    failure_penalty: float = -300.0
    timestep_minutes: int = 5          # fixed
    terminate_on_illegal: bool = False

    def __post_init__(self):
        if self.timestep_minutes != 5:
            raise ValueError("the step width is fixed at 5 minutes")
        for name in ("overflow_steps_to_disconnect", "line_cooldown",
                     "substation_cooldown", "reconnect_cooldown_after_trip"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Observation:
    """Full MDP state exposed to agents (see the featurizer for the layout)."""

    month: int
    day: int
    hour: int
    minute: int
    day_of_week: int
    p_gen: np.ndarray
    q_gen: np.ndarray
    v_gen: np.ndarray
    p_load: np.ndarray
    q_load: np.ndarray
    v_load: np.ndarray
    p_or: np.ndarray
    p_ex: np.ndarray
    q_or: np.ndarray
    q_ex: np.ndarray
    v_or: np.ndarray
    v_ex: np.ndarray
    a_or: np.ndarray
    a_ex: np.ndarray
    line_connected: np.ndarray          # bool per line
    rho: np.ndarray
    topo_vect: np.ndarray               # int8, {0 disconnected, 1, 2}
    t_overflow: np.ndarray              # consecutive overflowed steps per line
    t_line_cooldown: np.ndarray
    t_sub_cooldown: np.ndarray
    t_next_maintenance: np.ndarray      # steps until next known forced window
    t_maintenance_duration: np.ndarray  # remaining (active) or scheduled length

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.month, self.day, self.hour, self.minute,
                           self.day_of_week], dtype=np.int64).tobytes())
        for name in ("p_gen", "q_gen", "v_gen", "p_load", "q_load", "v_load",
                     "p_or", "p_ex", "q_or", "q_ex", "v_or", "v_ex", "a_or",
                     "a_ex", "line_connected", "rho", "topo_vect", "t_overflow",
                     "t_line_cooldown", "t_sub_cooldown", "t_next_maintenance",
                     "t_maintenance_duration"):
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    done_reason: str | None
    info: dict = field(default_factory=dict)


class GridEnv:
    """The grid-operation MDP for one (grid, chronic, seed) triple."""

    def __init__(self, grid: Grid, chronic: Chronic, config: EnvConfig = EnvConfig(),
                 seed: int = 0):
        validate_chronic_refs(chronic, grid)
        self.grid = grid
        self.chronic = chronic
        self.config = config
        self.seed = seed
        self._was_reset = False
        self.reset()

    # ------------------------------------------------------------------ setup

    def reset(self) -> Observation:
        g = self.grid
        self._rng = np.random.default_rng(self.seed)
        self.t = 0
        self.topo = np.full(g.topo_size, BUS_1, dtype=np.int8)
        self.t_of = np.zeros(g.n_lines, dtype=np.int64)
        self.t_line = np.zeros(g.n_lines, dtype=np.int64)
        self.t_sub = np.zeros(g.n_substations, dtype=np.int64)
        self.forced_end = np.zeros(g.n_lines, dtype=np.int64)  # outage while t < end
        self.opp_budget = self.chronic.opponent.budget
        self.opp_cooldown = 0
        self.done = False
        self.done_reason: str | None = None
        self.total_reward = 0.0
        self.survived_steps = 0
        self._was_reset = True

        for ev in self.chronic.maintenance:
            if ev.start == 0:
                self._force_outage(ev.line, 0 + ev.duration)
        try:
            self._solution = solve_dc(g, self.topo, self._injections(0))
        except PowerFlowError as exc:
            raise InfeasibleInitialStateError(str(exc)) from exc
        self._last_rho = self._solution.rho.copy()
        if self.chronic.steps == 1:
            self.done = True
            self.done_reason = SURVIVED
        self._observation = self._build_observation()
        return self._observation

    def _injections(self, t: int) -> InjectionProfile:
        return InjectionProfile(self.chronic.p_gen[t], self.chronic.p_load[t])

    def _force_outage(self, line_id: int, end_step: int) -> None:
        g = self.grid
        self.topo[g.pos_line_origin(line_id)] = DISCONNECTED
        self.topo[g.pos_line_extremity(line_id)] = DISCONNECTED
        self.forced_end[line_id] = max(self.forced_end[line_id], end_step)

    # ------------------------------------------------------------------ views

    @property
    def observation(self) -> Observation:
        return self._observation

    def line_is_connected(self, line_id: int) -> bool:
        return self.topo[self.grid.pos_line_origin(line_id)] != DISCONNECTED

    def clone(self) -> "GridEnv":
        new = object.__new__(GridEnv)
        new.grid = self.grid
        new.chronic = self.chronic
        new.config = self.config
        new.seed = self.seed
        new._was_reset = True
        new._rng = np.random.default_rng()
        new._rng.bit_generator.state = self._rng.bit_generator.state
        new.t = self.t
        new.topo = self.topo.copy()
        new.t_of = self.t_of.copy()
        new.t_line = self.t_line.copy()
        new.t_sub = self.t_sub.copy()
        new.forced_end = self.forced_end.copy()
        new.opp_budget = self.opp_budget
        new.opp_cooldown = self.opp_cooldown
        new.done = self.done
        new.done_reason = self.done_reason
        new.total_reward = self.total_reward
        new.survived_steps = self.survived_steps
        new._solution = self._solution
        new._last_rho = self._last_rho.copy()
        new._observation = self._observation
        return new

    def state_digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.t, self.opp_budget, self.opp_cooldown,
                           int(self.done), self.survived_steps], dtype=np.int64).tobytes())
        for arr in (self.topo, self.t_of, self.t_line, self.t_sub, self.forced_end):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.float64(self.total_reward).tobytes())
        h.update(repr(self._rng.bit_generator.state).encode())
        h.update((self.done_reason or "").encode())
        h.update(self._observation.digest().encode())
        return h.hexdigest()

    # ------------------------------------------------------------------ core

    def step(self, action: Action) -> StepResult:
        if self.done:
            raise EpisodeDoneError("episode is over")
        info: dict = {"illegal": False, "illegal_reason": None,
                      "attacked_line": None, "auto_disconnected": [],
                      "maintenance_started": [], "attempted": action}

        applied, illegal_reason = self._legalize(action)
        if illegal_reason is not None:
            info["illegal"] = True
            info["illegal_reason"] = illegal_reason
            if self.config.terminate_on_illegal:
                self.done = True
                self.done_reason = ILLEGAL_CASCADE
                reward = self.config.failure_penalty
                self.total_reward += reward
                info["rho_max"] = rho_max(self._solution) if self._solution else 0.0
                return StepResult(self._observation, reward, True, self.done_reason, info)

        timers_set = self._apply_action(applied)
        failure = self._advance(info, with_opponent=True, started=timers_set)

        if failure is not None:
            reward = self.config.failure_penalty
            self.done = True
            self.done_reason = failure
            info["rho_max"] = 0.0
        else:
            reward = step_reward(rho_max(self._solution))
            info["rho_max"] = rho_max(self._solution)
            self.survived_steps += 1
            if self.t == self.chronic.steps - 1:
                reward += self.config.survive_bonus
                self.done = True
                self.done_reason = SURVIVED

        self.total_reward += reward
        self._tick_timers(timers_set)
        self._observation = self._build_observation()
        info["applied"] = applied
        return StepResult(self._observation, reward, self.done, self.done_reason, info)

    def simulate(self, action: Action) -> tuple[np.ndarray, float, bool]:
        """One-step what-if on a clone with the true next-row forecast.

        The opponent is never simulated (future attacks are unknown); the
        environment is left untouched.  Returns (rho vector, rho_max,
        feasible); infeasible outcomes yield rho_max = +inf.
        """
        if self.done:
            raise EpisodeDoneError("episode is over")
        probe = self.clone()
        applied, _ = probe._legalize(action)
        started = probe._apply_action(applied)
        failure = probe._advance({}, with_opponent=False, started=started)
        if failure is not None:
            return np.zeros(self.grid.n_lines), float("inf"), False
        return probe._solution.rho.copy(), rho_max(probe._solution), True

    # ------------------------------------------------------------ sub-phases

    def _legalize(self, action: Action) -> tuple[Action, str | None]:
        g = self.grid
        if isinstance(action, DoNothing):
            return action, None
        if isinstance(action, SetSubstation):
            sub = action.action.substation
            if not (0 <= sub < g.n_substations):
                return DO_NOTHING, f"unknown substation {sub}"
            if self.t_sub[sub] > 0:
                return DO_NOTHING, f"substation {sub} under cooldown"
            try:
                apply_substation_action(g, self.topo, action.action)
            except InvalidActionError as exc:
                return DO_NOTHING, str(exc)
            return action, None
        if isinstance(action, (ReconnectLine, DisconnectLine)):
            line = action.line
            if not (0 <= line < g.n_lines):
                return DO_NOTHING, f"unknown line {line}"
            if self.t_line[line] > 0:
                return DO_NOTHING, f"line {line} under cooldown"
            if isinstance(action, ReconnectLine):
                if self.line_is_connected(line):
                    return DO_NOTHING, f"line {line} already connected"
                if self.forced_end[line] > self.t + 1:
                    return DO_NOTHING, f"line {line} in forced outage"
                if action.bus_origin not in (1, 2) or action.bus_extremity not in (1, 2):
                    return DO_NOTHING, "reconnection buses must be 1 or 2"
            else:
                if not self.line_is_connected(line):
                    return DO_NOTHING, f"line {line} already disconnected"
            return action, None
        return DO_NOTHING, f"unsupported action {action!r}"

    def _apply_action(self, action: Action) -> list[tuple[str, int]]:
        """Apply a legal action; returns the timers started this step."""
        g = self.grid
        started: list[tuple[str, int]] = []
        if isinstance(action, SetSubstation):
            self.topo = apply_substation_action(g, self.topo, action.action)
            self.t_sub[action.action.substation] = self.config.substation_cooldown
            started.append(("sub", action.action.substation))
        elif isinstance(action, ReconnectLine):
            self.topo[g.pos_line_origin(action.line)] = action.bus_origin
            self.topo[g.pos_line_extremity(action.line)] = action.bus_extremity
            self.t_line[action.line] = self.config.line_cooldown
            started.append(("line", action.line))
        elif isinstance(action, DisconnectLine):
            self.topo[g.pos_line_origin(action.line)] = DISCONNECTED
            self.topo[g.pos_line_extremity(action.line)] = DISCONNECTED
            self.t_line[action.line] = self.config.line_cooldown
            started.append(("line", action.line))
        return started

    def _advance(self, info: dict, with_opponent: bool,
                 started: list[tuple[str, int]]) -> str | None:
        """Phases 3-8; returns a failure reason or None."""
        t_next = self.t + 1
        for ev in self.chronic.maintenance:
            if ev.start == t_next:
                self._force_outage(ev.line, ev.start + ev.duration)
                if "maintenance_started" in info:
                    info["maintenance_started"].append(ev.line)

        if with_opponent:
            attacked = self._opponent_act(t_next)
            if attacked is not None:
                info["attacked_line"] = attacked

        self.t = t_next
        try:
            self._solution = solve_dc(self.grid, self.topo, self._injections(t_next))
        except IslandedGridError as exc:
            self._solution = None
            return LOAD_NOT_SERVED if exc.islanded_loads else BLACKOUT
        except PowerFlowError:
            self._solution = None
            return BLACKOUT

        overflowed = (self._solution.rho > 1.0) & self._solution.connected
        self.t_of[overflowed] += 1
        self.t_of[~overflowed] = 0
        trip = (self.t_of >= self.config.overflow_steps_to_disconnect) | \
               ((self._solution.rho >= self.config.hard_overflow_rho)
                & self._solution.connected)
        if np.any(trip):
            for line_id in np.flatnonzero(trip):
                line_id = int(line_id)
                g = self.grid
                self.topo[g.pos_line_origin(line_id)] = DISCONNECTED
                self.topo[g.pos_line_extremity(line_id)] = DISCONNECTED
                self.t_line[line_id] = self.config.reconnect_cooldown_after_trip
                self.t_of[line_id] = 0
                started.append(("line", line_id))
                if "auto_disconnected" in info:
                    info["auto_disconnected"].append(line_id)
            try:
                self._solution = solve_dc(self.grid, self.topo, self._injections(t_next))
            except IslandedGridError as exc:
                self._solution = None
                return LOAD_NOT_SERVED if exc.islanded_loads else BLACKOUT
            except PowerFlowError:
                self._solution = None
                return BLACKOUT

        self._last_rho = self._solution.rho.copy()
        return None

    def _opponent_act(self, t_next: int) -> int | None:
        opp = self.chronic.opponent
        if self.opp_budget <= 0 or self.opp_cooldown > 0 or not opp.targets:
            return None
        if opp.probability <= 0.0:
            return None
        if self._rng.random() >= opp.probability:
            return None
        candidates = [l for l in opp.targets if self.line_is_connected(l)]
        if not candidates:
            return None
        weights = np.array([max(self._last_rho[l], 0.0) for l in candidates])
        probs = weights / weights.sum() if weights.sum() > 0 else None
        line = int(self._rng.choice(np.array(candidates), p=probs))
        self._force_outage(line, t_next + opp.duration)
        self.opp_budget -= 1
        self.opp_cooldown = opp.cooldown + 1  # ticked down at end of this step
        return line

    def _tick_timers(self, started: list[tuple[str, int]]) -> None:
        line_started = {i for kind, i in started if kind == "line"}
        sub_started = {i for kind, i in started if kind == "sub"}
        for i in range(self.grid.n_lines):
            if self.t_line[i] > 0 and i not in line_started:
                self.t_line[i] -= 1
        for s in range(self.grid.n_substations):
            if self.t_sub[s] > 0 and s not in sub_started:
                self.t_sub[s] -= 1
        if self.opp_cooldown > 0:
            self.opp_cooldown -= 1

    # ---------------------------------------------------------- observation

    def _build_observation(self) -> Observation:
        g = self.grid
        sol = self._solution
        ts = self.chronic.timestamp(self.t)

        from .power_flow import balanced_injections
        inj = self._injections(self.t)
        try:
            p_gen = balanced_injections(g, inj)
        except PowerFlowError:
            p_gen = inj.p_gen.copy()

        if sol is not None:
            p_or = sol.p_flow.copy()
            rho = sol.rho.copy()
        else:
            p_or = np.zeros(g.n_lines)
            rho = np.zeros(g.n_lines)
        connected = np.array([self.line_is_connected(l) for l in range(g.n_lines)])
        p_or[~connected] = 0.0
        rho[~connected] = 0.0

        t_nm = np.zeros(g.n_lines, dtype=np.int64)
        t_d = np.zeros(g.n_lines, dtype=np.int64)
        for line_id in range(g.n_lines):
            if self.forced_end[line_id] > self.t:
                t_nm[line_id] = 0
                t_d[line_id] = self.forced_end[line_id] - self.t
            else:
                upcoming = [ev for ev in self.chronic.maintenance
                            if ev.line == line_id and ev.start > self.t]
                if upcoming:
                    nxt = min(upcoming, key=lambda ev: ev.start)
                    t_nm[line_id] = nxt.start - self.t
                    t_d[line_id] = nxt.duration

        zeros_g = np.zeros(g.n_generators)
        zeros_d = np.zeros(g.n_loads)
        return Observation(
            month=ts.month, day=ts.day, hour=ts.hour, minute=ts.minute,
            day_of_week=ts.weekday(),
            p_gen=p_gen, q_gen=zeros_g, v_gen=zeros_g.copy(),
            p_load=inj.p_load.copy(), q_load=zeros_d, v_load=zeros_d.copy(),
            p_or=p_or, p_ex=-p_or, q_or=np.zeros(g.n_lines),
            q_ex=np.zeros(g.n_lines), v_or=np.zeros(g.n_lines),
            v_ex=np.zeros(g.n_lines), a_or=np.abs(p_or), a_ex=np.abs(p_or),
            line_connected=connected, rho=rho, topo_vect=self.topo.copy(),
            t_overflow=self.t_of.copy(), t_line_cooldown=self.t_line.copy(),
            t_sub_cooldown=self.t_sub.copy(), t_next_maintenance=t_nm,
            t_maintenance_duration=t_d,
        )
