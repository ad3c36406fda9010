"""Agent evaluation: run baselines and the guided controller over chronic
suites, with per-episode JSONL logs and a machine-readable report.

Agents:
  do_nothing  — submits the idle action every step.
  lookahead   — the controller with the RL branch replaced by exhaustive
                one-step simulation over the whole action set (the stand-in
                for an operator's expert rules; labelled as such in reports).
  guided      — the controller driven by a trained policy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actions import ActionSet, DO_NOTHING
from .controller import Controller, ControllerConfig
from .environment import EnvConfig, GridEnv
from .grid import Grid
from .policy import PolicyParams
from .scenario import Chronic, EpisodeLogWriter


class AgentError(ValueError):
    pass


class DoNothingAgent:
    name = "do_nothing"

    def act(self, env: GridEnv):
        return DO_NOTHING, None


class ControllerAgent:
    def __init__(self, name: str, controller: Controller):
        self.name = name
        self.controller = controller

    def act(self, env: GridEnv):
        decision = self.controller.decide(env)
        return decision.action, decision


def make_agent(kind: str, grid: Grid, action_set: ActionSet,
               policy: PolicyParams | None = None,
               controller_cfg: ControllerConfig = ControllerConfig()):
    if kind == "do_nothing":
        return DoNothingAgent()
    if kind == "lookahead":
        return ControllerAgent("lookahead",
                               Controller(grid, action_set, None, controller_cfg))
    if kind == "guided":
        if policy is None:
            raise AgentError("guided agent needs a policy checkpoint")
        return ControllerAgent("guided",
                               Controller(grid, action_set, policy, controller_cfg))
    raise AgentError(f"unknown agent kind {kind!r}")


@dataclass(frozen=True)
class EpisodeResult:
    chronic_id: str
    agent: str
    seed: int
    survived_steps: int
    total_steps: int
    total_reward: float
    done_reason: str
    wall_clock_s: float
    score: float | None = None


def run_episode(grid: Grid, chronic: Chronic, agent, seed: int,
                env_cfg: EnvConfig = EnvConfig(),
                log_sink=None, scorer=None) -> EpisodeResult:
    """Play one full episode; optionally stream a JSONL log to ``log_sink``."""
    env = GridEnv(grid, chronic, env_cfg, seed=seed)
    writer = None
    if log_sink is not None:
        writer = EpisodeLogWriter(log_sink, grid.name, chronic.id, seed, agent.name)
    t0 = time.perf_counter()
    while not env.done:
        action, decision = agent.act(env)
        result = env.step(action)
        if writer is not None:
            writer.step(env.t, action, result.info.get("applied", action), result,
                        decision.to_dict() if decision is not None else None)
    wall = time.perf_counter() - t0
    if writer is not None:
        writer.end(env.survived_steps, env.total_reward, env.done_reason)
    score = scorer(env.survived_steps, env.total_reward, chronic) if scorer else None
    return EpisodeResult(chronic.id, agent.name, seed, env.survived_steps,
                         chronic.steps - 1, env.total_reward,
                         env.done_reason or "", wall, score)


def evaluate_agents(grid: Grid, chronics: list[Chronic], agent_kinds: list[str],
                    action_set: ActionSet, policy: PolicyParams | None = None,
                    controller_cfg: ControllerConfig = ControllerConfig(),
                    env_cfg: EnvConfig = EnvConfig(), base_seed: int = 0,
                    log_dir: str | Path | None = None,
                    scorer=None) -> list[EpisodeResult]:
    """One row per (chronic, agent); deterministic given base_seed."""
    results = []
    for kind in agent_kinds:
        for k, chronic in enumerate(chronics):
            agent = make_agent(kind, grid, action_set, policy, controller_cfg)
            sink = None
            path = None
            if log_dir is not None:
                path = Path(log_dir) / f"{chronic.id}__{kind}.jsonl"
                sink = open(path, "w", encoding="utf-8")
            try:
                results.append(run_episode(grid, chronic, agent, base_seed + k,
                                           env_cfg, sink, scorer))
            finally:
                if sink is not None:
                    sink.close()
    return results


def summarize(results: list[EpisodeResult]) -> dict:
    """Per-agent medians and survival percentages."""
    agents = sorted({r.agent for r in results})
    out = {}
    for a in agents:
        rows = [r for r in results if r.agent == a]
        steps = np.array([r.survived_steps for r in rows])
        full = np.array([r.survived_steps >= r.total_steps for r in rows])
        out[a] = {
            "episodes": len(rows),
            "median_survived_steps": float(np.median(steps)),
            "mean_survived_steps": float(steps.mean()),
            "survival_pct": float(100.0 * full.mean()),
            "mean_reward": float(np.mean([r.total_reward for r in rows])),
            "wall_clock_s": float(sum(r.wall_clock_s for r in rows)),
        }
    return out


def render_table(results: list[EpisodeResult]) -> str:
    """Human-readable run table plus the per-agent summary."""
    lines = [f"{'chronic':28} {'agent':12} {'survived':>9} {'of':>5} "
             f"{'reward':>10} {'reason':18} {'sec':>7}"]
    for r in results:
        lines.append(f"{r.chronic_id:28} {r.agent:12} {r.survived_steps:>9} "
                     f"{r.total_steps:>5} {r.total_reward:>10.2f} "
                     f"{r.done_reason:18} {r.wall_clock_s:>7.2f}")
    lines.append("")
    for agent, row in summarize(results).items():
        lines.append(f"{agent}: median {row['median_survived_steps']:.0f} steps, "
                     f"{row['survival_pct']:.0f}% full survival, "
                     f"mean reward {row['mean_reward']:.1f}")
    return "\n".join(lines)


def results_payload(results: list[EpisodeResult]) -> dict:
    return {
        "rows": [r.__dict__ for r in results],
        "summary": summarize(results),
    }
