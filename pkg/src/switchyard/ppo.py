"""Clipped-PPO training over the reduced action set.

The learner shares the controller's gating with inference: environments run
through the full decision pipeline, and only steps where the RL branch both
fired and executed its own pick become transitions.  Rewards accrued between
engagements are folded into the preceding transition with gamma discounting,
so GAE runs over the compressed engaged sequence.  Transitions land in a
prioritized buffer (priority = |advantage| + epsilon) and are evicted once
they are more than one update round stale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .actions import ActionSet, SetSubstation
from .controller import BRANCH_RL, Controller, ControllerConfig
from .environment import EnvConfig, GridEnv, SURVIVED
from .grid import Grid
from .policy import PolicyParams, featurize, log_softmax
from .scenario import Chronic


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 0.003
    clip_range: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs_per_update: int = 4
    minibatch_size: int = 256
    sample_size: int = 2048          # transitions drawn per epoch (paper-scale ~20k)
    n_envs: int = 4                  # parallel environments (paper-scale 36)
    rounds: int = 8
    episodes_per_round: int = 1      # per environment
    max_env_steps: int | None = None # optional global step cap (smoke runs)
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    priority_epsilon: float = 1e-3
    max_stale_rounds: int = 1
    kl_stop: float | None = 0.15     # stop a round's epochs once KL drifts past this
    # Deterministic model selection: every `select_every` rounds, play
    # `select_episodes` greedy-gated episodes and keep the best parameters
    # seen (by total survived steps, ties to the earlier round).
    select_every: int | None = None
    select_episodes: int = 8
    actor_hidden: tuple[int, ...] = (1000, 1000, 1000)
    critic_hidden: tuple[int, ...] = (64,)

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_range <= 0.0:
            raise ValueError("clip_range must be > 0")


@dataclass
class Transition:
    state: np.ndarray
    action: int
    log_prob: float
    reward: float
    done: bool
    value: float
    priority: float = 0.0
    advantage: float = 0.0      # GAE at collection time
    ret: float = 0.0            # advantage + value
    worker: int = 0
    step: int = 0


# ---------------------------------------------------------------------------
# Generalized advantage estimation
# ---------------------------------------------------------------------------

def gae(rewards, values, dones, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Standard GAE with episode-boundary resets; value beyond the end is 0.

    Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values and dones must have equal length")
    n = rewards.shape[0]
    adv = np.zeros(n)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        next_value = values[t + 1] if t + 1 < n else 0.0
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        carry = delta + gamma * lam * nonterminal * carry
        adv[t] = carry
    return adv, adv + values


# ---------------------------------------------------------------------------
# Prioritized replay
# ---------------------------------------------------------------------------

class PrioritizedReplay:
    """Append-ordered buffer; sampling probability is proportional to priority."""

    def __init__(self):
        self._items: list[tuple[int, Transition]] = []   # (round, transition)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition, round_index: int) -> None:
        self._items.append((round_index, transition))

    def evict_older_than(self, min_round: int) -> None:
        self._items = [(r, tr) for r, tr in self._items if r >= min_round]

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            return []
        priorities = np.array([tr.priority for _, tr in self._items])
        probs = priorities / priorities.sum()
        idx = rng.choice(len(self._items), size=n, replace=True, p=probs)
        return [self._items[i][1] for i in idx]


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class Adam:
    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ---------------------------------------------------------------------------
# Clipped surrogate update
# ---------------------------------------------------------------------------

def ppo_loss_and_grads(params: PolicyParams, states, actions, old_log_probs,
                       advantages, returns, cfg: PPOConfig):
    """Loss value, parameter gradients and diagnostics for one minibatch.

    The objective is the clipped surrogate plus a squared-error value term
    (and an optional entropy bonus); gradients are exact.
    """
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    old_log_probs = np.asarray(old_log_probs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    batch = states.shape[0]

    logits = params.actor.forward(states, keep_cache=True)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    rows = np.arange(batch)
    logp_a = logp_all[rows, actions]
    # exp caps avoid overflow when the policy drifts far from old_log_probs;
    # such samples are deep in the clipped regime anyway
    ratio = np.exp(np.clip(logp_a - old_log_probs, -50.0, 50.0))

    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * advantages
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -surrogate.mean()

    values = params.critic.forward(states, keep_cache=True)[:, 0]
    value_err = values - returns
    value_loss = float(np.mean(value_err ** 2))

    entropy = float(-(probs * logp_all).sum(axis=1).mean())
    # k3 estimator: (r - 1) - ln r, non-negative either side of r = 1
    log_ratio = np.clip(logp_a - old_log_probs, -50.0, 50.0)
    approx_kl = float(np.mean((ratio - 1.0) - log_ratio))
    loss = float(policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy)

    # d(policy_loss)/d(logp_a): nonzero only where the unclipped term is active
    active = unclipped <= clipped
    d_logp_a = -(active * advantages * ratio) / batch
    one_hot = np.zeros_like(logp_all)
    one_hot[rows, actions] = 1.0
    d_logits = d_logp_a[:, None] * (one_hot - probs)
    if cfg.entropy_coef != 0.0:
        ent_per = -(probs * logp_all).sum(axis=1, keepdims=True)
        d_logits += cfg.entropy_coef * probs * (logp_all + ent_per) / batch
    actor_dw, actor_db = params.actor.backward(d_logits)

    d_values = cfg.value_coef * 2.0 * value_err[:, None] / batch
    critic_dw, critic_db = params.critic.backward(d_values)

    grads = actor_dw + actor_db + critic_dw + critic_db
    stats = {
        "loss": loss,
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": approx_kl,
        "clip_fraction": float(np.mean((ratio < 1.0 - cfg.clip_range)
                                       | (ratio > 1.0 + cfg.clip_range))),
    }
    return loss, grads, stats


def ppo_update(params: PolicyParams, optimizer: Adam, states, actions,
               old_log_probs, advantages, returns, cfg: PPOConfig) -> dict:
    """One gradient step on a minibatch; aborts (no change) on non-finite loss."""
    loss, grads, stats = ppo_loss_and_grads(params, states, actions,
                                            old_log_probs, advantages, returns, cfg)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        stats["aborted"] = True
        return stats
    optimizer.step(params.actor.parameters() + params.critic.parameters(), grads)
    stats["aborted"] = False
    return stats


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

class NoOverflowTransitionsWarning(UserWarning):
    pass


def train(grid: Grid, chronics: list[Chronic], action_set: ActionSet,
          ppo_cfg: PPOConfig = PPOConfig(),
          controller_cfg: ControllerConfig = ControllerConfig(),
          env_cfg: EnvConfig = EnvConfig(),
          seed: int = 0,
          metrics_sink=None,
          initial_params: PolicyParams | None = None) -> tuple[PolicyParams, list[dict]]:
    """Train the policy through the full gated pipeline; deterministic per seed.

    Environments run round-robin in a fixed order; an update round collects
    episodes from every environment, refreshes the replay buffer, and runs
    the configured PPO epochs over priority-weighted samples.
    """
    if not chronics:
        raise ValueError("need at least one chronic")

    seeds = np.random.SeedSequence(seed).spawn(3)
    rng_policy = np.random.default_rng(seeds[0])
    rng_sample = np.random.default_rng(seeds[1])
    rng_ctrl = np.random.default_rng(seeds[2])

    probe_env = GridEnv(grid, chronics[0], env_cfg, seed=seed)
    input_dim = featurize(probe_env.observation).shape[0]
    params = initial_params.copy() if initial_params is not None else \
        PolicyParams.initialize(input_dim, len(action_set), rng_policy,
                                ppo_cfg.actor_hidden, ppo_cfg.critic_hidden)
    optimizer = Adam(params.actor.parameters() + params.critic.parameters(),
                     ppo_cfg.learning_rate)
    buffer = PrioritizedReplay()
    metrics: list[dict] = []

    train_cfg = ControllerConfig(
        rho_threshold=controller_cfg.rho_threshold,
        rl_top_k=controller_cfg.rl_top_k,
        recovery_enabled=controller_cfg.recovery_enabled,
        sample_candidates=True,
    )

    total_transitions = 0
    steps_taken = 0
    episode_counter = 0
    step_budget = ppo_cfg.max_env_steps
    best_params: PolicyParams | None = None
    best_score = (-1, -1)

    for round_index in range(ppo_cfg.rounds):
        round_rewards = []
        round_survivals = []
        if step_budget is not None and steps_taken >= step_budget:
            break
        for worker in range(ppo_cfg.n_envs):
            controller = Controller(grid, action_set, params, train_cfg, rng=rng_ctrl)
            for _ in range(ppo_cfg.episodes_per_round):
                if step_budget is not None and steps_taken >= step_budget:
                    break
                chronic = chronics[episode_counter % len(chronics)]
                env = GridEnv(grid, chronic, env_cfg,
                              seed=seed * 100003 + episode_counter)
                episode_counter += 1
                episode, steps_taken = _collect_episode(
                    env, controller, ppo_cfg, worker, steps_taken, step_budget)
                round_rewards.append(env.total_reward)
                round_survivals.append(env.done_reason == SURVIVED)
                if episode:
                    _finalize_episode(episode, buffer, ppo_cfg, round_index)
                    total_transitions += len(episode)

        buffer.evict_older_than(round_index - ppo_cfg.max_stale_rounds)

        row = {
            "round": round_index,
            "mean_episode_reward": float(np.mean(round_rewards)) if round_rewards else 0.0,
            "survival_rate": float(np.mean(round_survivals)) if round_survivals else 0.0,
            "buffer_size": len(buffer),
            "clip_fraction": 0.0,
            "value_loss": 0.0,
            "entropy": 0.0,
        }
        if len(buffer) > 0:
            epoch_stats = []
            for _ in range(ppo_cfg.epochs_per_update):
                batch = buffer.sample(ppo_cfg.sample_size, rng_sample)
                epoch_stats.extend(_run_epoch(params, optimizer, batch, ppo_cfg,
                                              rng_sample))
                if ppo_cfg.kl_stop is not None and epoch_stats and \
                        epoch_stats[-1]["approx_kl"] > ppo_cfg.kl_stop:
                    break
            if epoch_stats:
                row["clip_fraction"] = float(np.mean([s["clip_fraction"] for s in epoch_stats]))
                row["value_loss"] = float(np.mean([s["value_loss"] for s in epoch_stats]))
                row["entropy"] = float(np.mean([s["entropy"] for s in epoch_stats]))
        if ppo_cfg.select_every is not None and \
                (round_index + 1) % ppo_cfg.select_every == 0:
            score = _selection_score(grid, chronics, action_set, params,
                                     controller_cfg, env_cfg, seed,
                                     ppo_cfg.select_episodes)
            row["selection_survival"] = score[0]
            row["selection_diversity"] = score[1]
            if score > best_score:
                best_score = score
                best_params = params.copy()
        metrics.append(row)
        if metrics_sink is not None:
            _write_metrics_row(metrics_sink, row)

    if total_transitions == 0:
        warnings.warn("no overflow transitions were collected; returning the "
                      "initial parameters", NoOverflowTransitionsWarning,
                      stacklevel=2)
    if best_params is not None:
        final_score = _selection_score(grid, chronics, action_set, params,
                                       controller_cfg, env_cfg, seed,
                                       ppo_cfg.select_episodes)
        if final_score > best_score:
            best_params = params
    return (best_params if best_params is not None else params), metrics


def _selection_score(grid: Grid, chronics: list[Chronic], action_set: ActionSet,
                     params: PolicyParams, controller_cfg: ControllerConfig,
                     env_cfg: EnvConfig, seed: int,
                     episodes: int) -> tuple[int, int]:
    """Greedy gated-controller score over a fixed deterministic slate:
    (total steps survived, distinct substations acted on).

    The diversity component only breaks survival ties: spreading
    reconfigurations across substations spreads switching wear, which is the
    same concern the per-substation cooldown models.
    """
    survived = 0
    subs_used: set[int] = set()
    for k in range(episodes):
        chronic = chronics[k % len(chronics)]
        env = GridEnv(grid, chronic, env_cfg, seed=seed * 777 + k)
        controller = Controller(grid, action_set, params, controller_cfg)
        while not env.done:
            action = controller.decide(env).action
            if isinstance(action, SetSubstation):
                subs_used.add(action.action.substation)
            env.step(action)
        survived += env.survived_steps
    return survived, len(subs_used)


def _collect_episode(env: GridEnv, controller: Controller, cfg: PPOConfig,
                     worker: int, steps_taken: int,
                     step_budget: int | None) -> tuple[list[Transition], int]:
    """Run one episode; returns engaged transitions with aggregated rewards."""
    episode: list[Transition] = []
    pending: Transition | None = None
    pending_pow = 1.0
    while not env.done:
        if step_budget is not None and steps_taken >= step_budget:
            break
        decision = controller.decide(env)
        obs = env.observation
        engaged = decision.branch == BRANCH_RL and decision.action_index is not None
        result = env.step(decision.action)
        steps_taken += 1
        if engaged:
            if pending is not None:
                episode.append(pending)
            pending = Transition(
                state=featurize(obs), action=decision.action_index,
                log_prob=decision.log_prob if decision.log_prob is not None else 0.0,
                reward=result.reward, done=False,
                value=decision.value if decision.value is not None else 0.0,
                worker=worker, step=env.t)
            pending_pow = cfg.gamma
        elif pending is not None:
            pending.reward += pending_pow * result.reward
            pending_pow *= cfg.gamma
        if result.done and pending is not None:
            pending.done = True
    if pending is not None:
        pending.done = True
        episode.append(pending)
    return episode, steps_taken


def _finalize_episode(episode: list[Transition], buffer: PrioritizedReplay,
                      cfg: PPOConfig, round_index: int) -> None:
    rewards = [tr.reward for tr in episode]
    values = [tr.value for tr in episode]
    dones = [float(tr.done) for tr in episode]
    advantages, returns = gae(rewards, values, dones, cfg.gamma, cfg.gae_lambda)
    for tr, adv, ret in zip(episode, advantages, returns):
        tr.advantage = float(adv)
        tr.ret = float(ret)
        tr.priority = float(abs(adv)) + cfg.priority_epsilon
        buffer.add(tr, round_index)


def _run_epoch(params: PolicyParams, optimizer: Adam, batch: list[Transition],
               cfg: PPOConfig, rng: np.random.Generator) -> list[dict]:
    if not batch:
        return []
    states = np.stack([tr.state for tr in batch])
    actions = np.array([tr.action for tr in batch], dtype=np.int64)
    old_logp = np.array([tr.log_prob for tr in batch])
    advantages = np.array([tr.advantage for tr in batch])
    returns = np.array([tr.ret for tr in batch])
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    order = rng.permutation(len(batch))
    stats = []
    for start in range(0, len(batch), cfg.minibatch_size):
        idx = order[start:start + cfg.minibatch_size]
        stats.append(ppo_update(params, optimizer, states[idx], actions[idx],
                                old_logp[idx], advantages[idx], returns[idx], cfg))
    return stats


METRICS_COLUMNS = ("round", "mean_episode_reward", "survival_rate",
                   "buffer_size", "clip_fraction", "value_loss", "entropy")


def _write_metrics_row(sink, row: dict) -> None:
    if getattr(sink, "_wrote_header", False) is False:
        sink.write("\t".join(METRICS_COLUMNS) + "\n")
        sink._wrote_header = True
    sink.write("\t".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                         for c in METRICS_COLUMNS) + "\n")
