"""Drive the operator console API in-process: create a session, ask for a
recommendation, explore what-ifs (which never mutate the session), and commit
steps.

Run:  python3 demos/06_operator_console.py

For the real browser console, start the backend with
  switchyard serve --grid ... --chronics-dir ... --actions ...
and open the frontend (see frontend/README.md).
"""

from fastapi.testclient import TestClient

from switchyard.actions import reduce_action_space
from switchyard.controller import ControllerConfig
from switchyard.fixtures import adversarial_suite, training_grid
from switchyard.service import ServiceState, create_app

grid = training_grid()
chronics = {c.id: c for c in adversarial_suite(grid, count=2, steps=120)}
action_set = reduce_action_space(grid, list(chronics.values()), budget=12, seed=5)
state = ServiceState(grid, chronics, action_set, policy=None,
                     controller_cfg=ControllerConfig())
client = TestClient(create_app(state))

scenarios = client.get("/api/scenarios").json()
print("scenarios on offer:")
for s in scenarios:
    print(f"  {s['id']}: {s['steps']} steps, attack targets {s['opponent']['targets']}")

session = client.post("/api/sessions", json={
    "chronic": scenarios[0]["id"], "seed": 42, "agent": "lookahead"}).json()
sid = session["session"]
print(f"\nsession {sid} on {session['chronic']}")

for _ in range(12):
    rec = client.get(f"/api/sessions/{sid}/recommendation").json()
    # what-if the recommended action before committing: purity guaranteed
    before = client.get(f"/api/sessions/{sid}/state").json()["digest"]
    preview = client.post(f"/api/sessions/{sid}/simulate",
                          json={"action": rec["action"]}).json()
    after = client.get(f"/api/sessions/{sid}/state").json()["digest"]
    assert before == after, "what-if must not change the session"
    step = client.post(f"/api/sessions/{sid}/step", json={"accept": True}).json()
    print(f"  t={step['t']:3d} {rec['branch']:12} rho_max={step['rho_max']:.3f} "
          f"(preview said {preview['rho_max']:.3f}) reward={step['reward']:+.2f}")
    if step["done"]:
        break

print("\nepisode log excerpt:")
log = client.get(f"/api/sessions/{sid}/log").text.splitlines()
for line in log[:3]:
    print(" ", line[:110], "...")
