/** Pure view-state logic: everything here is a function of backend payloads
 * plus the config-supplied safety threshold. No physics, no legality checks,
 * no hard-coded thresholds.
 */

import type {
  ActionPayload,
  ConfigPayload,
  DecisionPayload,
  GridPayload,
  ObservationPayload,
  SimulatePayload,
  StepPayload,
} from "./types.js";

export type LoadBand = "safe" | "warning" | "overload" | "off";

/** Classify a line's loading against the backend's safety threshold. */
export function loadBand(rho: number, connected: boolean, threshold: number): LoadBand {
  if (!connected) return "off";
  if (rho < threshold) return "safe";
  if (rho < 1.0) return "warning";
  return "overload";
}

export const BAND_COLORS: Record<LoadBand, string> = {
  safe: "#2f9e44",
  warning: "#e8a33d",
  overload: "#e03131",
  off: "#6c7686",
};

export interface TimelineEntry {
  t: number;
  label: string;
  rhoMax: number;
  reward: number;
  illegal: boolean;
  events: string[];
}

export function describeAction(action: ActionPayload): string {
  switch (action.kind) {
    case "do_nothing":
      return "do nothing";
    case "set_substation":
      return `re-bus substation ${action.substation} [${action.assignment.join("")}]`;
    case "reconnect_line":
      return `reconnect line ${action.line}`;
    case "disconnect_line":
      return `disconnect line ${action.line}`;
  }
}

export function timelineEntry(step: StepPayload): TimelineEntry {
  const events: string[] = [];
  if (step.attacked_line !== null) events.push(`attack on line ${step.attacked_line}`);
  if (step.auto_disconnected.length > 0)
    events.push(`overload tripped ${step.auto_disconnected.join(", ")}`);
  if (step.illegal) events.push(`illegal: ${step.illegal_reason ?? "converted"}`);
  if (step.done) events.push(`episode over (${step.done_reason})`);
  return {
    t: step.t,
    label: describeAction(step.applied),
    rhoMax: step.rho_max,
    reward: step.reward,
    illegal: step.illegal,
    events,
  };
}

export interface WhatIfRow {
  line: number;
  before: number;
  after: number;
  delta: number;
}

/** Per-line deltas of a what-if preview against the current observation. */
export function whatIfRows(obs: ObservationPayload, preview: SimulatePayload): WhatIfRow[] {
  return preview.rho.map((after, line) => {
    const before = obs.rho[line] ?? 0;
    return { line, before, after, delta: after - before };
  });
}

export interface GraphNode {
  substation: number;
  x: number;
  y: number;
  split: boolean; // any element on busbar 2
  generators: number;
  loads: number;
}

export interface GraphEdge {
  line: number;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  band: LoadBand;
  rho: number;
}

export interface GraphModel {
  nodes: GraphNode[];
  edges: GraphEdge[];
  width: number;
  height: number;
}

const PAD = 40;
const SPAN = 520;

/** Deterministic geometry from the grid file's pinned layout (fallback: a
 * circle), colored by the observation. */
export function graphModel(
  grid: GridPayload,
  obs: ObservationPayload,
  threshold: number,
): GraphModel {
  const n = grid.substations.length;
  const raw: [number, number][] =
    grid.layout ??
    grid.substations.map((_, i) => [
      Math.cos((2 * Math.PI * i) / n),
      Math.sin((2 * Math.PI * i) / n),
    ]);
  const xs = raw.map((p) => p[0]);
  const ys = raw.map((p) => p[1]);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const scaleX = SPAN / Math.max(maxX - minX, 1e-9);
  const scaleY = SPAN / Math.max(maxY - minY, 1e-9);
  const scale = Math.min(scaleX, scaleY);
  const pos = raw.map(([x, y]) => [
    PAD + (x - minX) * scale,
    PAD + (maxY - y) * scale,
  ]) as [number, number][];

  // which substations have an element on busbar 2: read from the topology
  // vector using the same canonical ordering the backend documents
  const nLines = grid.lines.length;
  const onBus2 = new Set<number>();
  grid.lines.forEach((ln) => {
    if (obs.topo_vect[ln.id] === 2) onBus2.add(ln.origin);
    if (obs.topo_vect[nLines + ln.id] === 2) onBus2.add(ln.extremity);
  });
  grid.generators.forEach((g) => {
    if (obs.topo_vect[2 * nLines + g.id] === 2) onBus2.add(g.substation);
  });
  grid.loads.forEach((d) => {
    if (obs.topo_vect[2 * nLines + grid.generators.length + d.id] === 2)
      onBus2.add(d.substation);
  });

  const nodes: GraphNode[] = grid.substations.map((s) => ({
    substation: s.id,
    x: pos[s.id]![0],
    y: pos[s.id]![1],
    split: onBus2.has(s.id),
    generators: s.generators.length,
    loads: s.loads.length,
  }));
  const edges: GraphEdge[] = grid.lines.map((ln) => ({
    line: ln.id,
    x1: pos[ln.origin]![0],
    y1: pos[ln.origin]![1],
    x2: pos[ln.extremity]![0],
    y2: pos[ln.extremity]![1],
    band: loadBand(obs.rho[ln.id] ?? 0, obs.line_connected[ln.id] ?? false, threshold),
    rho: obs.rho[ln.id] ?? 0,
  }));
  return { nodes, edges, width: SPAN + 2 * PAD, height: SPAN + 2 * PAD };
}

/** Legal-looking overrides offered in the picker (the backend still has the
 * final word on legality; conversions come back flagged). */
export function overrideOptions(grid: GridPayload, obs: ObservationPayload): ActionPayload[] {
  const options: ActionPayload[] = [{ kind: "do_nothing" }];
  obs.line_connected.forEach((connected, line) => {
    if (!connected) {
      options.push({ kind: "reconnect_line", line, bus_origin: 1, bus_extremity: 1 });
    }
  });
  grid.substations.forEach((s) => {
    const size = s.elements;
    if (size >= 2) {
      options.push({
        kind: "set_substation",
        substation: s.id,
        assignment: new Array<number>(size).fill(1),
      });
    }
  });
  return options;
}

export interface RecommendationView {
  branch: string;
  actionLabel: string;
  rhoDoNothing: number | null;
  rhoChosen: number | null;
  candidates: { index: number; rho: number | null }[];
}

export function recommendationView(
  decision: DecisionPayload,
  config: ConfigPayload,
): RecommendationView {
  return {
    branch: decision.branch,
    actionLabel: describeAction(decision.action),
    rhoDoNothing: decision.rho_do_nothing,
    rhoChosen: decision.rho_chosen,
    candidates: decision.candidates
      .slice(0, config.rl_top_k)
      .map(([index, rho]) => ({ index, rho })),
  };
}
