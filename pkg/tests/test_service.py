import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from switchyard.actions import reduce_action_space
from switchyard.controller import ControllerConfig
from switchyard.environment import EnvConfig
from switchyard.evaluate import make_agent, run_episode
from switchyard.fixtures import adversarial_suite, training_grid
from switchyard.service import ServiceState, create_app


@pytest.fixture(scope="module")
def stack():
    grid = training_grid()
    chronics = {c.id: c for c in adversarial_suite(grid, count=2, steps=60)}
    action_set = reduce_action_space(grid, list(chronics.values()), budget=10,
                                     seed=5)
    state = ServiceState(grid, chronics, action_set, policy=None,
                         controller_cfg=ControllerConfig(),
                         env_cfg=EnvConfig())
    client = TestClient(create_app(state))
    return grid, chronics, action_set, client


def _create(client, chronic_id, seed=0):
    resp = client.post("/api/sessions", json={"chronic": chronic_id,
                                              "seed": seed,
                                              "agent": "lookahead"})
    assert resp.status_code == 201, resp.text
    return resp.json()


def test_config_exposes_threshold(stack):
    _, _, action_set, client = stack
    config = client.get("/api/config").json()
    assert config["rho_threshold"] == 0.95
    assert config["action_count"] == len(action_set)
    assert config["grid"]["name"] == "train5"


def test_scenarios_listing(stack):
    _, chronics, _, client = stack
    rows = client.get("/api/scenarios").json()
    assert {r["id"] for r in rows} == set(chronics)
    assert all(r["steps"] == 60 for r in rows)


def test_session_lifecycle_and_state(stack):
    _, chronics, _, client = stack
    cid = sorted(chronics)[0]
    payload = _create(client, cid)
    sid = payload["session"]
    state = client.get(f"/api/sessions/{sid}/state").json()
    assert state["t"] == 0 and not state["done"]
    assert len(state["observation"]["rho"]) == 9


def test_unknown_session_404(stack):
    *_, client = stack
    assert client.get("/api/sessions/nope/state").status_code == 404


def test_unknown_chronic_422(stack):
    *_, client = stack
    resp = client.post("/api/sessions", json={"chronic": "missing", "seed": 0})
    assert resp.status_code == 422


def test_malformed_action_422(stack):
    _, chronics, _, client = stack
    sid = _create(client, sorted(chronics)[0], seed=1)["session"]
    resp = client.post(f"/api/sessions/{sid}/simulate",
                       json={"action": {"kind": "warp_core"}})
    assert resp.status_code == 422


def test_simulate_purity_100_calls(stack):
    _, chronics, _, client = stack
    sid = _create(client, sorted(chronics)[0], seed=2)["session"]
    before = client.get(f"/api/sessions/{sid}/state").json()["digest"]
    for k in range(100):
        action = {"kind": "do_nothing"} if k % 2 == 0 else \
            {"kind": "disconnect_line", "line": k % 9}
        resp = client.post(f"/api/sessions/{sid}/simulate",
                           json={"action": action})
        assert resp.status_code == 200
        body = resp.json()
        assert set(body) == {"rho", "rho_max", "feasible"}
    after = client.get(f"/api/sessions/{sid}/state").json()["digest"]
    assert before == after


def test_accept_applies_current_recommendation(stack):
    _, chronics, _, client = stack
    sid = _create(client, sorted(chronics)[0], seed=3)["session"]
    rec = client.get(f"/api/sessions/{sid}/recommendation").json()
    step = client.post(f"/api/sessions/{sid}/step", json={"accept": True}).json()
    assert step["applied"] == rec["action"]


def test_override_with_illegal_action_is_flagged(stack):
    _, chronics, _, client = stack
    sid = _create(client, sorted(chronics)[0], seed=4)["session"]
    resp = client.post(f"/api/sessions/{sid}/step",
                       json={"action": {"kind": "reconnect_line", "line": 0}})
    body = resp.json()
    assert body["illegal"] is True
    assert body["applied"] == {"kind": "do_nothing"}


def test_step_after_done_conflict(stack):
    _, chronics, _, client = stack
    sid = _create(client, sorted(chronics)[0], seed=5)["session"]
    while True:
        resp = client.post(f"/api/sessions/{sid}/step", json={"accept": True})
        if resp.json()["done"]:
            break
    resp = client.post(f"/api/sessions/{sid}/step", json={"accept": True})
    assert resp.status_code == 409


def test_accept_only_session_log_matches_cli_run(stack):
    grid, chronics, action_set, client = stack
    cid = sorted(chronics)[1]
    seed = 11
    sid = _create(client, cid, seed=seed)["session"]
    while True:
        resp = client.post(f"/api/sessions/{sid}/step", json={"accept": True})
        if resp.json()["done"]:
            break
    service_log = client.get(f"/api/sessions/{sid}/log").text

    sink = io.StringIO()
    agent = make_agent("lookahead", grid, action_set)
    run_episode(grid, chronics[cid], agent, seed=seed, log_sink=sink)
    assert service_log == sink.getvalue()


def test_event_stream_delivers_steps(stack):
    _, chronics, _, client = stack
    sid = _create(client, sorted(chronics)[0], seed=6)["session"]
    client.post(f"/api/sessions/{sid}/step", json={"accept": True})
    client.post(f"/api/sessions/{sid}/step", json={"accept": True})
    collected = []
    with client.stream("GET",
                       f"/api/sessions/{sid}/events?start=0&limit=2") as stream:
        for line in stream.iter_lines():
            if line.startswith("data: ") and line != "data: {}":
                collected.append(json.loads(line[6:]))
    assert [p["t"] for p in collected] == [1, 2]
    assert all("observation" in p and "reward" in p for p in collected)
