"""Threshold-gated dispatch among do-nothing, recovery, reconnection and
RL-recommended reconfigurations.

Every decision starts by simulating do-nothing.  Below the safety threshold
the controller only reconnects lines, unwinds bus splits (one substation per
step, lowest id first) or idles; at or above it, policy-ranked candidates are
simulated and the feasible one with the lowest worst-line load wins.  With no
policy attached, the candidate list is the whole action set, which is the
exhaustive one-step lookahead baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import (Action, ActionSet, DO_NOTHING, ReconnectLine,
                      SetSubstation, SubstationAction, action_to_dict)
from .environment import GridEnv, Observation
from .grid import BUS_1, BUS_2, Grid
from .policy import PolicyParams, featurize, log_softmax

BRANCH_DO_NOTHING = "do_nothing"
BRANCH_RECOVERY = "recovery"
BRANCH_RECONNECT = "reconnect"
BRANCH_RL = "rl_action"
BRANCH_RL_RECONNECT = "rl_action_plus_reconnect"

GATED_BRANCHES = (BRANCH_DO_NOTHING, BRANCH_RECOVERY, BRANCH_RECONNECT)


class AlreadyAtReferenceError(RuntimeError):
    """recovery_action called with nothing to unwind."""


@dataclass(frozen=True)
class ControllerConfig:
    rho_threshold: float = 0.95
    rl_top_k: int = 5
    recovery_enabled: bool = True
    # Training mode: the RL branch draws one Gumbel-max sample from the policy
    # instead of simulate-vetting its top-k, so rollouts stay on-policy and
    # the learner feels the consequences of its own ranking.
    sample_candidates: bool = False

    def __post_init__(self):
        if not (0.0 < self.rho_threshold <= 1.0):
            raise ValueError("rho_threshold must be in (0, 1]")
        if self.rl_top_k < 1:
            raise ValueError("rl_top_k must be >= 1")


@dataclass(frozen=True)
class Decision:
    action: Action
    branch: str
    rho_do_nothing: float
    rho_chosen: float
    action_index: int | None = None     # ActionSet index, RL branch only
    log_prob: float | None = None
    value: float | None = None
    candidate_count: int = 0
    # (ActionSet index, simulated rho_max or None if infeasible), RL branch
    candidates: tuple[tuple[int, float | None], ...] = ()

    def to_dict(self) -> dict:
        return {
            "action": action_to_dict(self.action),
            "branch": self.branch,
            "rho_do_nothing": _json_float(self.rho_do_nothing),
            "rho_chosen": _json_float(self.rho_chosen),
            "action_index": self.action_index,
            "candidate_count": self.candidate_count,
            "candidates": [[idx, _json_float(rho) if rho is not None else None]
                           for idx, rho in self.candidates],
        }


def _json_float(x: float):
    return None if np.isinf(x) else float(x)


def reconnectable_lines(obs: Observation) -> list[int]:
    """Disconnected lines whose cooldown elapsed and that are not in a forced
    outage window, ascending by id."""
    out = []
    for line_id in range(len(obs.line_connected)):
        if obs.line_connected[line_id]:
            continue
        if obs.t_line_cooldown[line_id] > 0:
            continue
        active_window = (obs.t_next_maintenance[line_id] == 0
                         and obs.t_maintenance_duration[line_id] > 0)
        if active_window:
            continue
        out.append(line_id)
    return out


def deviated_substations(grid: Grid, obs: Observation) -> list[int]:
    """Substations with at least one element on bus 2, ascending."""
    owner = grid.position_substation()
    subs = sorted({int(owner[p]) for p in np.flatnonzero(obs.topo_vect == BUS_2)})
    return subs


def recovery_action(grid: Grid, obs: Observation) -> SetSubstation:
    """Restore the lowest-id deviated substation to all-bus-1."""
    deviated = deviated_substations(grid, obs)
    if not deviated:
        raise AlreadyAtReferenceError("topology is already the reference")
    sub = deviated[0]
    n = grid.substations[sub].n_elements
    return SetSubstation(SubstationAction(sub, (BUS_1,) * n))


class Controller:
    """One decision pipeline per environment instance.

    policy=None turns the RL branch into exhaustive one-step lookahead over
    the whole action set (the expert-style baseline).
    """

    def __init__(self, grid: Grid, action_set: ActionSet,
                 policy: PolicyParams | None = None,
                 config: ControllerConfig = ControllerConfig(),
                 rng: np.random.Generator | None = None):
        self.grid = grid
        self.action_set = action_set
        self.policy = policy
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.last_decision: Decision | None = None

    # ------------------------------------------------------------------ api

    def decide(self, env: GridEnv) -> Decision:
        obs = env.observation
        _, rho_dn, feasible_dn = env.simulate(DO_NOTHING)
        rho_dn = rho_dn if feasible_dn else float("inf")

        if rho_dn < self.config.rho_threshold:
            decision = self._gated_branch(env, obs, rho_dn)
        else:
            decision = self._rl_branch(env, obs, rho_dn)
        self.last_decision = decision
        return decision

    # ------------------------------------------------------------- branches

    def _gated_branch(self, env: GridEnv, obs: Observation, rho_dn: float) -> Decision:
        lines = reconnectable_lines(obs)
        if lines:
            action = ReconnectLine(lines[0], BUS_1, BUS_1)
            _, rho_sim, ok = env.simulate(action)
            return Decision(action, BRANCH_RECONNECT, rho_dn,
                            rho_sim if ok else float("inf"))
        if self.config.recovery_enabled and deviated_substations(self.grid, obs):
            action = recovery_action(self.grid, obs)
            _, rho_sim, ok = env.simulate(action)
            if ok and rho_sim < self.config.rho_threshold:
                return Decision(action, BRANCH_RECOVERY, rho_dn, rho_sim)
        return Decision(DO_NOTHING, BRANCH_DO_NOTHING, rho_dn, rho_dn)

    def _rl_branch(self, env: GridEnv, obs: Observation, rho_dn: float) -> Decision:
        state = featurize(obs)
        logp_all = None
        value = None
        if self.policy is not None and self.config.sample_candidates:
            idx, logp, value = self.policy.act(state, mode="sample", rng=self.rng)
            return Decision(self.action_set.action(idx), BRANCH_RL, rho_dn,
                            rho_dn, action_index=idx, log_prob=logp, value=value,
                            candidate_count=1, candidates=((idx, None),))
        if self.policy is not None:
            logits = self.policy.logits(state)
            if not np.all(np.isfinite(logits)):
                raise ValueError("non-finite actor logits")
            logp_all = log_softmax(logits)
            value = float(self.policy.value(state))
            candidates = self.policy.top_k(state, self.config.rl_top_k)
        else:
            candidates = list(range(len(self.action_set)))

        best_idx: int | None = None
        best_rho = float("inf")
        evaluated: list[tuple[int, float | None]] = []
        for idx in candidates:
            action = self.action_set.action(idx)
            if isinstance(action, SetSubstation):
                sub = action.action.substation
                if obs.t_sub_cooldown[sub] > 0:
                    continue
                if self._matches_current(obs, action.action):
                    continue
                _, rho_sim, ok = env.simulate(action)
                evaluated.append((idx, rho_sim if ok else None))
                if not ok:
                    continue
            else:  # do-nothing member: reuse the gate simulation
                ok = bool(np.isfinite(rho_dn))
                rho_sim = rho_dn
                evaluated.append((idx, rho_sim if ok else None))
                if not ok:
                    continue
            if rho_sim < best_rho:
                best_rho, best_idx = rho_sim, idx

        if best_idx is None:
            best_action: Action = DO_NOTHING
            best_rho = rho_dn
            best_index_for_log = None
        else:
            best_action = self.action_set.action(best_idx)
            best_index_for_log = best_idx

        lines = reconnectable_lines(obs)
        if lines:
            reconnect = ReconnectLine(lines[0], BUS_1, BUS_1)
            _, rho_rec, ok = env.simulate(reconnect)
            if ok and rho_rec <= best_rho:
                return Decision(reconnect, BRANCH_RL_RECONNECT, rho_dn, rho_rec,
                                candidate_count=len(evaluated),
                                candidates=tuple(evaluated))

        return Decision(
            best_action, BRANCH_RL, rho_dn, best_rho,
            action_index=best_index_for_log,
            log_prob=(float(logp_all[best_idx]) if logp_all is not None
                      and best_idx is not None else None),
            value=value,
            candidate_count=len(evaluated),
            candidates=tuple(evaluated),
        )

    def _matches_current(self, obs: Observation, action: SubstationAction) -> bool:
        positions = self.grid.substation_positions(action.substation)
        for k, pos in enumerate(positions):
            current = obs.topo_vect[pos]
            if current != 0 and current != action.assignment[k]:
                return False
        return True
