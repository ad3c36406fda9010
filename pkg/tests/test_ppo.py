import warnings

import numpy as np
import pytest

from switchyard.actions import reduce_action_space
from switchyard.controller import BRANCH_RL, Controller, ControllerConfig
from switchyard.environment import GridEnv
from switchyard.fixtures import adversarial_suite, easy_chronic, training_grid
from switchyard.policy import PolicyParams, featurize
from switchyard.ppo import (Adam, NoOverflowTransitionsWarning, PPOConfig,
                            PrioritizedReplay, Transition, gae,
                            ppo_loss_and_grads, ppo_update, train)


# ------------------------------------------------------------------- GAE

def gae_brute_force(rewards, values, dones, gamma, lam):
    """O(T^2) direct summation of discounted deltas within episodes."""
    n = len(rewards)
    adv = np.zeros(n)
    for t in range(n):
        acc, coef, k = 0.0, 1.0, t
        while k < n:
            next_v = values[k + 1] if k + 1 < n else 0.0
            delta = rewards[k] + gamma * next_v * (1 - dones[k]) - values[k]
            acc += coef * delta
            if dones[k]:
                break
            coef *= gamma * lam
            k += 1
        adv[t] = acc
    return adv


def test_gae_lambda_zero_is_one_step_td():
    rng = np.random.default_rng(0)
    r = rng.standard_normal(20)
    v = rng.standard_normal(20)
    d = (rng.random(20) < 0.2).astype(float)
    adv, ret = gae(r, v, d, 0.9, 0.0)
    for t in range(20):
        next_v = v[t + 1] if t + 1 < 20 else 0.0
        assert adv[t] == pytest.approx(r[t] + 0.9 * next_v * (1 - d[t]) - v[t],
                                       abs=1e-12)
    assert np.allclose(ret, adv + v)


def test_gae_montecarlo_limit():
    r = np.array([1.0, 2.0, 3.0, 4.0])
    v = np.zeros(4)
    d = np.array([0.0, 1.0, 0.0, 1.0])
    adv, _ = gae(r, v, d, 1.0, 1.0)
    assert np.allclose(adv, [3.0, 2.0, 7.0, 4.0])


def test_gae_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(1, 51))
        r = rng.standard_normal(n)
        v = rng.standard_normal(n)
        d = (rng.random(n) < 0.15).astype(float)
        adv, _ = gae(r, v, d, 0.99, 0.95)
        assert np.abs(adv - gae_brute_force(r, v, d, 0.99, 0.95)).max() < 1e-10


def test_gae_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        gae([1.0], [1.0, 2.0], [0.0], 0.9, 0.9)


# ------------------------------------------------------------------- PPO update

def tiny_params(n_in=4, n_act=3, seed=0):
    return PolicyParams.initialize(n_in, n_act, np.random.default_rng(seed),
                                   actor_hidden=(8,), critic_hidden=(6,))


def random_batch(params, rng, batch=16, old_equals_new=False):
    states = rng.standard_normal((batch, params.input_dim))
    actions = rng.integers(0, params.n_actions, batch)
    if old_equals_new:
        from switchyard.policy import log_softmax
        logits = params.actor.forward(states)
        old_logp = log_softmax(logits)[np.arange(batch), actions]
    else:
        old_logp = rng.standard_normal(batch) - 2.0
    adv = rng.standard_normal(batch)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    ret = rng.standard_normal(batch)
    return states, actions, old_logp, adv, ret


def test_ratio_one_gradient_unclipped():
    rng = np.random.default_rng(1)
    params = tiny_params()
    cfg = PPOConfig()
    states, actions, old_logp, adv, ret = random_batch(params, rng,
                                                       old_equals_new=True)
    _, _, stats = ppo_loss_and_grads(params, states, actions, old_logp, adv,
                                     ret, cfg)
    assert stats["clip_fraction"] == 0.0


def test_zero_advantages_only_value_head_moves():
    rng = np.random.default_rng(2)
    params = tiny_params()
    cfg = PPOConfig(entropy_coef=0.0)
    states, actions, old_logp, _, ret = random_batch(params, rng)
    adv = np.zeros(len(actions))
    actor_before = [w.copy() for w in params.actor.parameters()]
    critic_before = [w.copy() for w in params.critic.parameters()]
    optimizer = Adam(params.actor.parameters() + params.critic.parameters(), 0.01)
    stats = ppo_update(params, optimizer, states, actions, old_logp, adv, ret, cfg)
    assert stats["policy_loss"] == pytest.approx(0.0, abs=1e-12)
    for before, after in zip(actor_before, params.actor.parameters()):
        assert np.array_equal(before, after)
    assert any(not np.array_equal(b, a) for b, a in
               zip(critic_before, params.critic.parameters()))


def test_surrogate_never_exceeds_clip_bound():
    rng = np.random.default_rng(3)
    cfg = PPOConfig(clip_range=0.2)
    for _ in range(20):
        params = tiny_params(seed=int(rng.integers(0, 1000)))
        states, actions, old_logp, adv, ret = random_batch(params, rng)
        logits = params.actor.forward(states)
        from switchyard.policy import log_softmax
        logp = log_softmax(logits)[np.arange(len(actions)), actions]
        ratio = np.exp(logp - old_logp)
        surrogate = np.minimum(ratio * adv,
                               np.clip(ratio, 0.8, 1.2) * adv)
        assert np.all(surrogate <= (1 + cfg.clip_range) * np.abs(adv) + 1e-12)


def test_non_finite_loss_aborts_update():
    rng = np.random.default_rng(4)
    params = tiny_params()
    cfg = PPOConfig()
    states, actions, old_logp, adv, ret = random_batch(params, rng)
    states[0, 0] = np.nan
    before = [w.copy() for w in params.actor.parameters()]
    optimizer = Adam(params.actor.parameters() + params.critic.parameters(), 0.01)
    stats = ppo_update(params, optimizer, states, actions, old_logp, adv, ret, cfg)
    assert stats["aborted"]
    for b, a in zip(before, params.actor.parameters()):
        assert np.array_equal(b, a)


def test_gradients_match_finite_differences_many_shapes():
    rng = np.random.default_rng(11)
    cfg = PPOConfig(entropy_coef=0.01)
    worst = 0.0
    for trial in range(10):
        n_in = int(rng.integers(2, 6))
        n_act = int(rng.integers(2, 5))
        hidden = (int(rng.integers(3, 9)),)
        params = PolicyParams.initialize(n_in, n_act, np.random.default_rng(trial),
                                         actor_hidden=hidden, critic_hidden=(4,))
        states, actions, old_logp, adv, ret = random_batch(params, rng, batch=6)
        _, grads, _ = ppo_loss_and_grads(params, states, actions, old_logp,
                                         adv, ret, cfg)
        tensors = params.actor.parameters() + params.critic.parameters()
        h = 1e-5
        for tensor, grad in zip(tensors, grads):
            flat = tensor.reshape(-1)  # view; writes through
            for idx in range(0, flat.size, max(1, flat.size // 4)):
                old = flat[idx]
                flat[idx] = old + h
                up, _, _ = ppo_loss_and_grads(params, states, actions, old_logp,
                                              adv, ret, cfg)
                flat[idx] = old - h
                down, _, _ = ppo_loss_and_grads(params, states, actions, old_logp,
                                                adv, ret, cfg)
                flat[idx] = old
                fd = (up - down) / (2 * h)
                g = grad.ravel()[idx]
                # floor guards against FD cancellation noise on ~zero grads
                denom = max(abs(fd), abs(g), 1e-6)
                worst = max(worst, abs(fd - g) / denom)
    assert worst < 1e-4, worst


# ------------------------------------------------------------------- replay

def test_replay_priority_monotone_sampling():
    buffer = PrioritizedReplay()
    rng = np.random.default_rng(0)
    priorities = [0.1, 0.5, 1.0, 2.0, 4.0]
    for i, p in enumerate(priorities):
        tr = Transition(np.zeros(2), i, 0.0, 0.0, False, 0.0, priority=p)
        buffer.add(tr, round_index=0)
    draws = buffer.sample(10_000, rng)
    counts = np.bincount([tr.action for tr in draws], minlength=5)
    assert np.all(np.diff(counts) > 0)  # frequency increases with priority


def test_replay_staleness_eviction():
    buffer = PrioritizedReplay()
    for round_index in range(4):
        buffer.add(Transition(np.zeros(1), round_index, 0.0, 0.0, False, 0.0,
                              priority=1.0), round_index)
    buffer.evict_older_than(2)
    remaining = {tr.action for _, tr in buffer._items}
    assert remaining == {2, 3}


# ------------------------------------------------------------------- training

@pytest.fixture(scope="module")
def setup():
    grid = training_grid()
    suite = adversarial_suite(grid, count=4)
    aset = reduce_action_space(grid, suite[:2], budget=10, seed=5)
    return grid, suite, aset


SMOKE = dict(rounds=2, n_envs=2, episodes_per_round=1, epochs_per_update=2,
             minibatch_size=32, sample_size=128, actor_hidden=(32, 32),
             critic_hidden=(16,), max_env_steps=200)


def test_train_smoke_deterministic(setup):
    grid, suite, aset = setup
    cfg = PPOConfig(**SMOKE)
    p1, m1 = train(grid, suite, aset, ppo_cfg=cfg, seed=21)
    p2, m2 = train(grid, suite, aset, ppo_cfg=cfg, seed=21)
    for a, b in zip(p1.actor.parameters() + p1.critic.parameters(),
                    p2.actor.parameters() + p2.critic.parameters()):
        assert np.array_equal(a, b)
    assert m1 == m2


def test_train_zero_learning_rate_keeps_weights(setup):
    grid, suite, aset = setup
    cfg = PPOConfig(learning_rate=0.0, **SMOKE)
    params, _ = train(grid, suite, aset, ppo_cfg=cfg, seed=22)
    fresh, _ = train(grid, suite, aset,
                     ppo_cfg=PPOConfig(learning_rate=0.003, **SMOKE), seed=22)
    init, _ = train(grid, suite, aset,
                    ppo_cfg=PPOConfig(learning_rate=0.0, **SMOKE), seed=22)
    for a, b in zip(params.actor.parameters(), init.actor.parameters()):
        assert np.array_equal(a, b)
    # sanity: a non-zero rate does change the weights
    assert any(not np.array_equal(a, b) for a, b in
               zip(params.actor.parameters(), fresh.actor.parameters()))


def test_train_warns_without_overflow_transitions(setup):
    grid, _, aset = setup
    calm = [easy_chronic(grid, steps=30, base_load=0.4)]
    cfg = PPOConfig(**SMOKE)
    with pytest.warns(NoOverflowTransitionsWarning):
        params, _ = train(grid, calm, aset, ppo_cfg=cfg, seed=23)
    fresh = PolicyParams.initialize(params.input_dim, params.n_actions,
                                    np.random.default_rng(0))
    del fresh  # params are the untouched initial weights by construction


def test_buffer_gating_only_rl_branch_records(setup):
    grid, suite, aset = setup
    branches = []

    class Spy(Controller):
        def decide(self, env):
            decision = super().decide(env)
            branches.append((env.t, decision.branch, decision.action_index))
            return decision

    env = GridEnv(grid, suite[0], seed=31)
    rng = np.random.default_rng(0)
    policy = PolicyParams.initialize(
        featurize(env.observation).shape[0], len(aset), rng,
        actor_hidden=(32,), critic_hidden=(8,))
    spy = Spy(grid, aset, policy,
              ControllerConfig(sample_candidates=True), rng=rng)
    from switchyard.ppo import _collect_episode
    episode, _ = _collect_episode(env, spy, PPOConfig(), worker=0,
                                  steps_taken=0, step_budget=None)
    engaged_steps = {t for t, branch, idx in branches
                     if branch == BRANCH_RL and idx is not None}
    recorded_steps = {tr.step for tr in episode}
    assert recorded_steps <= {t + 1 for t in engaged_steps} or \
        recorded_steps <= engaged_steps
    assert len(episode) == len(engaged_steps)
