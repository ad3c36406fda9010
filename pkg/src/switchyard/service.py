"""HTTP backend for the operator console.

Sessions are in-memory environments with a controller attached; requests for
one session are serialized under its lock, what-if simulation never mutates,
and every committed step is appended to the session's episode log (the same
writer the CLI uses, so replays are byte-comparable) and pushed to event-
stream subscribers.
"""

from __future__ import annotations

import asyncio
import io
import json
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse

from .actions import Action, action_from_dict, action_to_dict
from .controller import ControllerConfig
from .environment import EnvConfig, EpisodeDoneError, GridEnv, Observation
from .evaluate import make_agent
from .grid import Grid
from .policy import PolicyParams
from .scenario import Chronic, EpisodeLogWriter

SESSION_IDLE_TIMEOUT_S = 1800.0


def observation_payload(obs: Observation) -> dict:
    def arr(a):
        return [float(x) for x in np.asarray(a).ravel()]
    return {
        "time": {"month": obs.month, "day": obs.day, "hour": obs.hour,
                 "minute": obs.minute, "day_of_week": obs.day_of_week},
        "p_gen": arr(obs.p_gen), "p_load": arr(obs.p_load),
        "p_or": arr(obs.p_or), "p_ex": arr(obs.p_ex),
        "a_or": arr(obs.a_or), "rho": arr(obs.rho),
        "line_connected": [bool(x) for x in obs.line_connected],
        "topo_vect": [int(x) for x in obs.topo_vect],
        "t_overflow": [int(x) for x in obs.t_overflow],
        "t_line_cooldown": [int(x) for x in obs.t_line_cooldown],
        "t_sub_cooldown": [int(x) for x in obs.t_sub_cooldown],
        "t_next_maintenance": [int(x) for x in obs.t_next_maintenance],
        "t_maintenance_duration": [int(x) for x in obs.t_maintenance_duration],
    }


def grid_payload(grid: Grid) -> dict:
    return {
        "name": grid.name,
        "substations": [{"id": s.id, "elements": s.n_elements,
                         "line_origins": list(s.line_origins),
                         "line_extremities": list(s.line_extremities),
                         "generators": list(s.generators),
                         "loads": list(s.loads)} for s in grid.substations],
        "lines": [{"id": ln.id, "origin": ln.origin, "extremity": ln.extremity,
                   "reactance": ln.reactance, "thermal_limit": ln.thermal_limit}
                  for ln in grid.lines],
        "generators": [{"id": g.id, "substation": g.substation, "p_max": g.p_max,
                        "renewable": g.renewable} for g in grid.generators],
        "loads": [{"id": d.id, "substation": d.substation} for d in grid.loads],
        "layout": [list(xy) for xy in grid.layout] if grid.layout else None,
    }


class Session:
    def __init__(self, session_id: str, grid: Grid, chronic: Chronic, seed: int,
                 agent_kind: str, state: "ServiceState"):
        self.id = session_id
        self.seed = seed
        self.chronic = chronic
        self.agent_kind = agent_kind
        self.env = GridEnv(grid, chronic, state.env_cfg, seed=seed)
        self.agent = make_agent(agent_kind, grid, state.action_set,
                                state.policy, state.controller_cfg)
        self.log_buffer = io.StringIO()
        self.writer = EpisodeLogWriter(self.log_buffer, grid.name, chronic.id,
                                       seed, agent_kind)
        self.history: list[dict] = []
        self.events: list[dict] = []   # every published step payload, in order
        self.lock = threading.Lock()
        self.last_touch = time.monotonic()
        self.log_path: Path | None = None
        if state.logs_dir is not None:
            self.log_path = Path(state.logs_dir) / f"session_{session_id}.jsonl"

    def touch(self):
        self.last_touch = time.monotonic()

    def flush_log(self):
        if self.log_path is not None:
            self.log_path.write_text(self.log_buffer.getvalue(), encoding="utf-8")

    def publish(self, payload: dict):
        self.events.append(payload)


class ServiceState:
    def __init__(self, grid: Grid, chronics: dict[str, Chronic],
                 action_set, policy: PolicyParams | None,
                 controller_cfg: ControllerConfig = ControllerConfig(),
                 env_cfg: EnvConfig = EnvConfig(),
                 logs_dir: str | None = None,
                 idle_timeout_s: float = SESSION_IDLE_TIMEOUT_S):
        self.grid = grid
        self.chronics = chronics
        self.action_set = action_set
        self.policy = policy
        self.controller_cfg = controller_cfg
        self.env_cfg = env_cfg
        self.logs_dir = logs_dir
        self.idle_timeout_s = idle_timeout_s
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()

    def sweep(self):
        now = time.monotonic()
        with self.lock:
            stale = [sid for sid, s in self.sessions.items()
                     if now - s.last_touch > self.idle_timeout_s]
            for sid in stale:
                del self.sessions[sid]

    def get(self, session_id: str) -> Session:
        self.sweep()
        with self.lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        session.touch()
        return session


def _state_payload(session: Session) -> dict:
    env = session.env
    return {
        "session": session.id,
        "chronic": session.chronic.id,
        "seed": session.seed,
        "agent": session.agent_kind,
        "t": env.t,
        "done": env.done,
        "done_reason": env.done_reason,
        "survived_steps": env.survived_steps,
        "total_reward": env.total_reward,
        "observation": observation_payload(env.observation),
        "history": session.history,
        "digest": env.state_digest(),
    }


def _decision_payload(session: Session) -> dict:
    if session.env.done:
        raise HTTPException(status_code=409, detail="episode is over")
    action, decision = session.agent.act(session.env)
    if decision is None:
        return {"action": action_to_dict(action), "branch": "do_nothing",
                "rho_do_nothing": None, "rho_chosen": None,
                "action_index": None, "candidate_count": 0, "candidates": []}
    return decision.to_dict()


def _apply_step(session: Session, action: Action, decision_dict: dict | None) -> dict:
    env = session.env
    try:
        result = env.step(action)
    except EpisodeDoneError:
        raise HTTPException(status_code=409, detail="episode is over")
    session.writer.step(env.t, action, result.info.get("applied", action),
                        result, decision_dict)
    if result.done:
        session.writer.end(env.survived_steps, env.total_reward,
                           env.done_reason or "")
        session.flush_log()
    payload = {
        "t": env.t,
        "reward": result.reward,
        "done": result.done,
        "done_reason": result.done_reason,
        "illegal": bool(result.info.get("illegal", False)),
        "illegal_reason": result.info.get("illegal_reason"),
        "applied": action_to_dict(result.info.get("applied", action)),
        "attacked_line": result.info.get("attacked_line"),
        "auto_disconnected": result.info.get("auto_disconnected", []),
        "rho_max": float(result.info.get("rho_max", 0.0)),
        "observation": observation_payload(result.observation),
    }
    session.history.append({
        "t": env.t,
        "decision": decision_dict,
        "applied": payload["applied"],
        "reward": result.reward,
        "illegal": payload["illegal"],
        "rho_max": payload["rho_max"],
    })
    session.publish(payload)
    return payload


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="switchyard operator console", version="1")

    @app.get("/api/config")
    def get_config():
        return {
            "grid": grid_payload(state.grid),
            "rho_threshold": state.controller_cfg.rho_threshold,
            "rl_top_k": state.controller_cfg.rl_top_k,
            "recovery_enabled": state.controller_cfg.recovery_enabled,
            "has_policy": state.policy is not None,
            "action_count": len(state.action_set),
        }

    @app.get("/api/scenarios")
    def list_scenarios():
        out = []
        for chronic in state.chronics.values():
            opp = chronic.opponent
            out.append({
                "id": chronic.id,
                "steps": chronic.steps,
                "start": chronic.start.isoformat(),
                "maintenance_events": len(chronic.maintenance),
                "opponent": {"targets": list(opp.targets),
                             "probability": opp.probability,
                             "budget": opp.budget,
                             "duration": opp.duration},
            })
        return sorted(out, key=lambda row: row["id"])

    @app.post("/api/sessions", status_code=201)
    def create_session(body: dict):
        chronic_id = body.get("chronic")
        if chronic_id not in state.chronics:
            raise HTTPException(status_code=422,
                                detail=f"unknown chronic {chronic_id!r}")
        if body.get("grid") not in (None, state.grid.name):
            raise HTTPException(status_code=422,
                                detail="grid does not match the served grid")
        agent_kind = body.get("agent", "guided" if state.policy else "lookahead")
        if agent_kind == "guided" and state.policy is None:
            raise HTTPException(status_code=422,
                                detail="no checkpoint loaded; guided agent unavailable")
        seed = int(body.get("seed", 0))
        session_id = body.get("session_id") or uuid.uuid4().hex[:12]
        state.sweep()
        with state.lock:
            if session_id in state.sessions:
                raise HTTPException(status_code=409, detail="session id in use")
            session = Session(session_id, state.grid,
                              state.chronics[chronic_id], seed, agent_kind, state)
            state.sessions[session_id] = session
        return _state_payload(session)

    @app.get("/api/sessions/{session_id}/state")
    def get_state(session_id: str):
        session = state.get(session_id)
        with session.lock:
            return _state_payload(session)

    @app.post("/api/sessions/{session_id}/simulate")
    def simulate(session_id: str, body: dict):
        session = state.get(session_id)
        try:
            action = action_from_dict(body.get("action", {}))
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed action: {exc}")
        with session.lock:
            if session.env.done:
                raise HTTPException(status_code=409, detail="episode is over")
            rho, rho_max_value, feasible = session.env.simulate(action)
        return {
            "rho": [float(x) for x in rho],
            "rho_max": None if not feasible else float(rho_max_value),
            "feasible": bool(feasible),
        }

    @app.get("/api/sessions/{session_id}/recommendation")
    def recommendation(session_id: str):
        session = state.get(session_id)
        with session.lock:
            return _decision_payload(session)

    @app.post("/api/sessions/{session_id}/step")
    def step(session_id: str, body: dict):
        session = state.get(session_id)
        with session.lock:
            if session.env.done:
                raise HTTPException(status_code=409, detail="episode is over")
            if body.get("accept"):
                action, decision = session.agent.act(session.env)
                decision_dict = decision.to_dict() if decision is not None else None
                return _apply_step(session, action, decision_dict)
            try:
                action = action_from_dict(body.get("action", {}))
            except (ValueError, KeyError, TypeError) as exc:
                raise HTTPException(status_code=422,
                                    detail=f"malformed action: {exc}")
            return _apply_step(session, action, None)

    @app.get("/api/sessions/{session_id}/log")
    def episode_log(session_id: str):
        session = state.get(session_id)
        with session.lock:
            return StreamingResponse(iter([session.log_buffer.getvalue()]),
                                     media_type="application/jsonl")

    @app.get("/api/sessions/{session_id}/events")
    async def events(session_id: str, start: int = 0, limit: int | None = None):
        """Server-push stream of step results.

        ``start`` replays already-committed steps from that event index
        (reconnect catch-up); the stream ends at episode end or after
        ``limit`` events.
        """
        session = state.get(session_id)

        async def stream():
            cursor = start
            sent = 0
            yield "event: hello\ndata: {}\n\n"
            while True:
                if cursor < len(session.events):
                    payload = session.events[cursor]
                    cursor += 1
                    sent += 1
                    yield f"data: {json.dumps(payload, sort_keys=True)}\n\n"
                    if payload.get("done") or (limit is not None and sent >= limit):
                        break
                else:
                    if session.env.done or (limit is not None and sent >= limit):
                        break
                    await asyncio.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
