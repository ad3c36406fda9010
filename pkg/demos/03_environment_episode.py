"""Step a full adversarial episode with the do-nothing policy and narrate
what the environment throws at it.

Run:  python3 demos/03_environment_episode.py
"""

from switchyard.actions import DO_NOTHING
from switchyard.environment import GridEnv
from switchyard.fixtures import adversarial_chronic, training_grid

grid = training_grid()
chronic = adversarial_chronic(grid, seed=104)
print(f"chronic {chronic.id}: {chronic.steps} five-minute steps, "
      f"attack targets {chronic.opponent.targets}, "
      f"budget {chronic.opponent.budget}")

env = GridEnv(grid, chronic, seed=104)
while not env.done:
    result = env.step(DO_NOTHING)
    events = []
    if result.info["attacked_line"] is not None:
        events.append(f"adversary tripped line {result.info['attacked_line']}")
    if result.info["auto_disconnected"]:
        events.append(f"overload tripped lines {result.info['auto_disconnected']}")
    if result.info["maintenance_started"]:
        events.append(f"maintenance started on {result.info['maintenance_started']}")
    if events or result.done:
        rho = result.info.get("rho_max", 0.0)
        print(f"  t={env.t:3d} rho_max={rho:5.2f}  {'; '.join(events)}")

print(f"\ndo-nothing survived {env.survived_steps} of {chronic.steps - 1} steps "
      f"({env.done_reason}), total reward {env.total_reward:.1f}")
print("a driven controller survives this scenario; see demo 04")
