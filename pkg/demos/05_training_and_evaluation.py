"""Train the policy on the adversarial suite, then benchmark it against the
do-nothing and exhaustive-lookahead baselines.

A short run for demonstration; pass --full for the configuration the
acceptance suite uses.

Run:  python3 demos/05_training_and_evaluation.py [--full]
"""

import sys
import time

from switchyard.actions import reduce_action_space
from switchyard.evaluate import evaluate_agents, render_table
from switchyard.fixtures import adversarial_suite, training_grid
from switchyard.ppo import PPOConfig, train

full = "--full" in sys.argv
grid = training_grid()
suite = adversarial_suite(grid, count=20 if full else 8)
action_set = reduce_action_space(grid, suite[:3], budget=12, seed=5)

# --full mirrors the acceptance recipe (~9 CPU-minutes); the default is a
# quick taste that underfits
cfg = PPOConfig(learning_rate=1e-3, rounds=180 if full else 20,
                n_envs=6 if full else 4, episodes_per_round=2,
                epochs_per_update=2, minibatch_size=128, sample_size=256,
                entropy_coef=0.03, kl_stop=0.05,
                select_every=5 if full else 10,
                select_episodes=16 if full else 8)
print(f"training on {len(suite)} chronics, {cfg.rounds} rounds, "
      f"{cfg.n_envs} environments...")
t0 = time.time()
params, metrics = train(grid, suite, action_set, ppo_cfg=cfg, seed=7)
print(f"trained in {time.time() - t0:.0f}s; survival rate per round:")
print("  " + " ".join(f"{m['survival_rate']:.2f}" for m in metrics))

print("\nevaluating do_nothing / lookahead / guided...")
results = evaluate_agents(grid, suite, ["do_nothing", "lookahead", "guided"],
                          action_set, policy=params, base_seed=1000)
print(render_table(results))
