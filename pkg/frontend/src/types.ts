/** Wire types mirroring the backend's JSON payloads (single source of truth). */

export interface GridPayload {
  name: string;
  substations: {
    id: number;
    elements: number;
    line_origins: number[];
    line_extremities: number[];
    generators: number[];
    loads: number[];
  }[];
  lines: {
    id: number;
    origin: number;
    extremity: number;
    reactance: number;
    thermal_limit: number;
  }[];
  generators: { id: number; substation: number; p_max: number; renewable: boolean }[];
  loads: { id: number; substation: number }[];
  layout: [number, number][] | null;
}

export interface ConfigPayload {
  grid: GridPayload;
  rho_threshold: number;
  rl_top_k: number;
  recovery_enabled: boolean;
  has_policy: boolean;
  action_count: number;
}

export interface ScenarioPayload {
  id: string;
  steps: number;
  start: string;
  maintenance_events: number;
  opponent: {
    targets: number[];
    probability: number;
    budget: number;
    duration: number;
  };
}

export interface ObservationPayload {
  time: { month: number; day: number; hour: number; minute: number; day_of_week: number };
  p_gen: number[];
  p_load: number[];
  p_or: number[];
  p_ex: number[];
  a_or: number[];
  rho: number[];
  line_connected: boolean[];
  topo_vect: number[];
  t_overflow: number[];
  t_line_cooldown: number[];
  t_sub_cooldown: number[];
  t_next_maintenance: number[];
  t_maintenance_duration: number[];
}

export type ActionPayload =
  | { kind: "do_nothing" }
  | { kind: "set_substation"; substation: number; assignment: number[] }
  | { kind: "reconnect_line"; line: number; bus_origin: number; bus_extremity: number }
  | { kind: "disconnect_line"; line: number };

export interface DecisionPayload {
  action: ActionPayload;
  branch: string;
  rho_do_nothing: number | null;
  rho_chosen: number | null;
  action_index: number | null;
  candidate_count: number;
  candidates: [number, number | null][];
}

export interface SessionState {
  session: string;
  chronic: string;
  seed: number;
  agent: string;
  t: number;
  done: boolean;
  done_reason: string | null;
  survived_steps: number;
  total_reward: number;
  observation: ObservationPayload;
  history: HistoryEntry[];
  digest: string;
}

export interface HistoryEntry {
  t: number;
  decision: DecisionPayload | null;
  applied: ActionPayload;
  reward: number;
  illegal: boolean;
  rho_max: number;
}

export interface StepPayload {
  t: number;
  reward: number;
  done: boolean;
  done_reason: string | null;
  illegal: boolean;
  illegal_reason: string | null;
  applied: ActionPayload;
  attacked_line: number | null;
  auto_disconnected: number[];
  rho_max: number;
  observation: ObservationPayload;
}

export interface SimulatePayload {
  rho: number[];
  rho_max: number | null;
  feasible: boolean;
}
