"""Watch the gated controller work through an attack: simulate-first gating,
bus splits under stress, reconnection after the forced outage, recovery back
to the reference topology.

Run:  python3 demos/04_controller_pipeline.py
"""

from switchyard.actions import reduce_action_space
from switchyard.controller import BRANCH_DO_NOTHING, Controller
from switchyard.environment import GridEnv
from switchyard.fixtures import adversarial_chronic, adversarial_suite, training_grid

grid = training_grid()
chronic = adversarial_chronic(grid, seed=104)

action_set = reduce_action_space(grid, adversarial_suite(grid, count=3),
                                 budget=12, seed=5)
print(f"reduced action set: {len(action_set)} actions")
for i, entry in enumerate(action_set):
    if entry.substation is not None:
        print(f"  [{i}] substation {entry.substation} -> {entry.action.action.assignment} "
              f"(impact {entry.impact:.3f})")

env = GridEnv(grid, chronic, seed=104)
controller = Controller(grid, action_set)  # no policy: exhaustive lookahead
print(f"\nrunning {chronic.id} under the controller:")
while not env.done:
    decision = controller.decide(env)
    result = env.step(decision.action)
    if decision.branch != BRANCH_DO_NOTHING or result.info["attacked_line"] is not None:
        note = ""
        if result.info["attacked_line"] is not None:
            note = f"   <- attack on line {result.info['attacked_line']}"
        print(f"  t={env.t:3d} {decision.branch:24} "
              f"rho_dn={decision.rho_do_nothing:5.2f} -> {decision.rho_chosen:5.2f}{note}")

print(f"\nsurvived {env.survived_steps} of {chronic.steps - 1} steps "
      f"({env.done_reason}), total reward {env.total_reward:.1f}")
