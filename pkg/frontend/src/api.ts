/** Thin typed client for the operator console backend.
 *
 * Every number rendered by the UI comes out of these payloads untouched;
 * the frontend never recomputes power flow or legality.
 */

import type {
  ActionPayload,
  ConfigPayload,
  DecisionPayload,
  ScenarioPayload,
  SessionState,
  SimulatePayload,
  StepPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(base + path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* keep statusText */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ConsoleClient {
  constructor(public base: string) {}

  config(): Promise<ConfigPayload> {
    return request(this.base, "/api/config");
  }

  scenarios(): Promise<ScenarioPayload[]> {
    return request(this.base, "/api/scenarios");
  }

  createSession(chronic: string, seed: number, agent?: string): Promise<SessionState> {
    return request(this.base, "/api/sessions", {
      method: "POST",
      body: JSON.stringify(agent ? { chronic, seed, agent } : { chronic, seed }),
    });
  }

  state(session: string): Promise<SessionState> {
    return request(this.base, `/api/sessions/${session}/state`);
  }

  simulate(session: string, action: ActionPayload): Promise<SimulatePayload> {
    return request(this.base, `/api/sessions/${session}/simulate`, {
      method: "POST",
      body: JSON.stringify({ action }),
    });
  }

  recommendation(session: string): Promise<DecisionPayload> {
    return request(this.base, `/api/sessions/${session}/recommendation`);
  }

  accept(session: string): Promise<StepPayload> {
    return request(this.base, `/api/sessions/${session}/step`, {
      method: "POST",
      body: JSON.stringify({ accept: true }),
    });
  }

  step(session: string, action: ActionPayload): Promise<StepPayload> {
    return request(this.base, `/api/sessions/${session}/step`, {
      method: "POST",
      body: JSON.stringify({ action }),
    });
  }

  async episodeLog(session: string): Promise<string> {
    const resp = await fetch(`${this.base}/api/sessions/${session}/log`);
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return await resp.text();
  }

  /** Live step events; `start` replays from that event index after a reload. */
  events(session: string, start = 0): EventSource {
    return new EventSource(`${this.base}/api/sessions/${session}/events?start=${start}`);
  }
}
