/** DOM construction for the console: grid SVG, timeline, recommendation card,
 * what-if panel. Render-only; every displayed figure is a backend value.
 */

import type { GraphModel, RecommendationView, TimelineEntry, WhatIfRow } from "./view.js";
import { BAND_COLORS } from "./view.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, String(v));
  return el;
}

export function renderGraph(model: GraphModel, mount: HTMLElement): void {
  mount.replaceChildren();
  const svg = svgEl("svg", {
    viewBox: `0 0 ${model.width} ${model.height}`,
    width: "100%",
  });
  for (const e of model.edges) {
    const line = svgEl("line", {
      x1: e.x1, y1: e.y1, x2: e.x2, y2: e.y2,
      stroke: BAND_COLORS[e.band],
      "stroke-width": e.band === "off" ? 2 : 4,
      "stroke-dasharray": e.band === "off" ? "6 5" : "none",
    });
    line.appendChild(svgEl("title", {})).textContent =
      `line ${e.line}: rho ${e.rho.toFixed(3)}`;
    svg.appendChild(line);
    const label = svgEl("text", {
      x: (e.x1 + e.x2) / 2, y: (e.y1 + e.y2) / 2 - 6,
      "font-size": 11, fill: "#8b95a6", "text-anchor": "middle",
    });
    label.textContent = e.band === "off" ? `L${e.line} out` : `L${e.line} ${e.rho.toFixed(2)}`;
    svg.appendChild(label);
  }
  for (const n of model.nodes) {
    if (n.split) {
      // a split substation renders as two half-nodes on a shared ring
      svg.appendChild(svgEl("circle", {
        cx: n.x, cy: n.y, r: 16, fill: "none",
        stroke: "#4f8ef7", "stroke-width": 2, "stroke-dasharray": "4 3",
      }));
      svg.appendChild(svgEl("circle", { cx: n.x - 5, cy: n.y, r: 8, fill: "#20304a" }));
      svg.appendChild(svgEl("circle", { cx: n.x + 5, cy: n.y, r: 8, fill: "#20304a" }));
    } else {
      svg.appendChild(svgEl("circle", { cx: n.x, cy: n.y, r: 12, fill: "#20304a" }));
    }
    const label = svgEl("text", {
      x: n.x, y: n.y - 18, "font-size": 12, fill: "#dbe2ee", "text-anchor": "middle",
    });
    label.textContent =
      `S${n.substation}` +
      (n.generators ? ` g${n.generators}` : "") +
      (n.loads ? ` d${n.loads}` : "");
    svg.appendChild(label);
  }
  mount.appendChild(svg);
}

export function renderTimeline(entries: TimelineEntry[], mount: HTMLElement): void {
  mount.replaceChildren();
  const list = document.createElement("ul");
  list.className = "timeline";
  for (const entry of entries.slice(-40).reverse()) {
    const item = document.createElement("li");
    item.className = entry.illegal ? "illegal" : "";
    const head = document.createElement("span");
    head.textContent = `t=${entry.t}  ${entry.label}  rho=${entry.rhoMax.toFixed(3)}  ` +
      `r=${entry.reward.toFixed(2)}`;
    item.appendChild(head);
    for (const note of entry.events) {
      const small = document.createElement("small");
      small.textContent = note;
      item.appendChild(small);
    }
    list.appendChild(item);
  }
  mount.appendChild(list);
}

export function renderRecommendation(view: RecommendationView, mount: HTMLElement): void {
  mount.replaceChildren();
  const card = document.createElement("div");
  card.className = "card";
  const fmt = (x: number | null) => (x === null ? "infeasible" : x.toFixed(3));
  const title = document.createElement("h3");
  title.textContent = `${view.branch}: ${view.actionLabel}`;
  card.appendChild(title);
  const line = document.createElement("p");
  line.textContent =
    `do-nothing rho ${fmt(view.rhoDoNothing)} -> chosen ${fmt(view.rhoChosen)}`;
  card.appendChild(line);
  if (view.candidates.length > 0) {
    const table = document.createElement("table");
    const header = table.insertRow();
    header.insertCell().textContent = "candidate";
    header.insertCell().textContent = "simulated rho";
    for (const c of view.candidates) {
      const row = table.insertRow();
      row.insertCell().textContent = `#${c.index}`;
      row.insertCell().textContent = fmt(c.rho);
    }
    card.appendChild(table);
  }
  mount.appendChild(card);
}

export function renderWhatIf(
  rows: WhatIfRow[],
  feasible: boolean,
  rhoMax: number | null,
  mount: HTMLElement,
): void {
  mount.replaceChildren();
  if (!feasible) {
    const banner = document.createElement("div");
    banner.className = "banner-error";
    banner.textContent = "would island the grid";
    mount.appendChild(banner);
    return;
  }
  const summary = document.createElement("p");
  summary.textContent = `predicted worst ratio ${rhoMax === null ? "?" : rhoMax.toFixed(3)}`;
  mount.appendChild(summary);
  const table = document.createElement("table");
  const header = table.insertRow();
  ["line", "now", "what-if", "delta"].forEach((h) => {
    header.insertCell().textContent = h;
  });
  for (const row of rows) {
    const tr = table.insertRow();
    tr.insertCell().textContent = String(row.line);
    tr.insertCell().textContent = row.before.toFixed(3);
    tr.insertCell().textContent = row.after.toFixed(3);
    const delta = tr.insertCell();
    delta.textContent = (row.delta >= 0 ? "+" : "") + row.delta.toFixed(3);
    delta.className = row.delta > 1e-9 ? "up" : row.delta < -1e-9 ? "down" : "";
  }
  mount.appendChild(table);
}
