/** Console wiring: one session per tab, confirmed-state-only rendering,
 * event-stream updates applied in arrival order.
 */

import { ApiError, ConsoleClient } from "./api.js";
import {
  graphModel,
  overrideOptions,
  recommendationView,
  timelineEntry,
  whatIfRows,
  describeAction,
  type TimelineEntry,
} from "./view.js";
import {
  renderGraph,
  renderRecommendation,
  renderTimeline,
  renderWhatIf,
} from "./render.js";
import type { ActionPayload, ConfigPayload, SessionState, StepPayload } from "./types.js";

const $ = (id: string): HTMLElement => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
};

const client = new ConsoleClient("");
let config: ConfigPayload;
let session: SessionState | null = null;
let timeline: TimelineEntry[] = [];
let stream: EventSource | null = null;

async function boot(): Promise<void> {
  config = await client.config();
  $("grid-name").textContent =
    `${config.grid.name} - threshold ${config.rho_threshold} - ` +
    `${config.action_count} actions - agent ${config.has_policy ? "guided" : "lookahead"}`;
  const scenarios = await client.scenarios();
  const picker = $("scenario") as HTMLSelectElement;
  picker.replaceChildren();
  for (const s of scenarios) {
    const opt = document.createElement("option");
    opt.value = s.id;
    opt.textContent = `${s.id} (${s.steps} steps, ` +
      `${s.opponent.targets.length ? "adversarial" : "calm"})`;
    picker.appendChild(opt);
  }
  $("start").addEventListener("click", () => {
    void startSession(picker.value, Number(($("seed") as HTMLInputElement).value));
  });
  $("accept").addEventListener("click", () => void commit({ accept: true }));
  $("whatif-run").addEventListener("click", () => void runWhatIf());
  $("override-run").addEventListener("click", () => void overrideStep());
}

async function startSession(chronic: string, seed: number): Promise<void> {
  stream?.close();
  session = await client.createSession(chronic, seed);
  timeline = [];
  followEvents();
  await refresh();
}

function followEvents(): void {
  if (!session) return;
  stream = client.events(session.session, session.history.length);
  stream.onmessage = (msg) => {
    if (!msg.data || msg.data === "{}") return;
    const step = JSON.parse(msg.data) as StepPayload;
    timeline.push(timelineEntry(step));
    void refresh();
    if (step.done) stream?.close();
  };
}

async function refresh(): Promise<void> {
  if (!session) return;
  const state = await client.state(session.session);
  session = state;
  renderGraph(graphModel(config.grid, state.observation, config.rho_threshold), $("graph"));
  renderTimeline(timeline, $("timeline"));
  $("status").textContent =
    `t=${state.t}/${state.done ? "done" : "live"}  survived=${state.survived_steps}  ` +
    `reward=${state.total_reward.toFixed(1)}` +
    (state.done ? `  (${state.done_reason})` : "");
  fillOverridePicker(state);
  if (state.done) {
    setControlsEnabled(false);
    $("recommendation").textContent = `episode over: ${state.done_reason}`;
    return;
  }
  setControlsEnabled(true);
  const decision = await client.recommendation(session.session);
  renderRecommendation(recommendationView(decision, config), $("recommendation"));
}

function setControlsEnabled(enabled: boolean): void {
  for (const id of ["accept", "whatif-run", "override-run"]) {
    ($(id) as HTMLButtonElement).disabled = !enabled;
  }
}

function fillOverridePicker(state: SessionState): void {
  const picker = $("override") as HTMLSelectElement;
  picker.replaceChildren();
  overrideOptions(config.grid, state.observation).forEach((action, i) => {
    const opt = document.createElement("option");
    opt.value = String(i);
    opt.textContent = describeAction(action);
    picker.appendChild(opt);
  });
}

function selectedOverride(): ActionPayload {
  if (!session) throw new Error("no session");
  const picker = $("override") as HTMLSelectElement;
  const options = overrideOptions(config.grid, session.observation);
  return options[Number(picker.value)] ?? { kind: "do_nothing" };
}

async function runWhatIf(): Promise<void> {
  if (!session) return;
  const action = selectedOverride();
  const preview = await client.simulate(session.session, action);
  renderWhatIf(
    whatIfRows(session.observation, preview),
    preview.feasible,
    preview.rho_max,
    $("whatif"),
  );
}

async function commit(body: { accept: true } | { action: ActionPayload }): Promise<void> {
  if (!session) return;
  try {
    if ("accept" in body) await client.accept(session.session);
    else await client.step(session.session, body.action);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      setControlsEnabled(false);
      $("recommendation").textContent = "episode over";
      return;
    }
    throw err;
  }
  // rendering happens from the event stream + confirmed state refetch
  await refresh();
}

async function overrideStep(): Promise<void> {
  await commit({ action: selectedOverride() });
}

void boot();
