import type { SessionStats } from "./stats.js";
import type { QueryView } from "./types.js";

export interface ConsoleState {
  query: QueryView | null;
  stats: SessionStats;
  banner: string | null;
  notice: string | null;
  busy: boolean;
}

export interface ConsoleHandlers {
  onAssign(index: number, label: string): void;
  onNewPerson(index: number, name: string): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function statsPanel(stats: SessionStats): HTMLElement {
  const panel = el("section", "stats");
  panel.appendChild(el("h2", undefined, "stream"));
  const grid = el("dl", "stats-grid");
  const rows: Array<[string, string, string]> = [
    ["records", String(stats.recordsSeen), "stat-records"],
    ["people", String(stats.distinct), "stat-classes"],
    ["queries issued", String(stats.queriesIssued), "stat-issued"],
    ["answered", String(stats.queriesAnswered), "stat-answered"],
    ["skipped", String(stats.queriesSkipped), "stat-skipped"],
    ["mean F1", stats.meanF1 === null ? "n/a" : stats.meanF1.toFixed(4), "stat-f1"],
    ["ENP", stats.enp === null ? "n/a" : stats.enp.toFixed(1), "stat-enp"],
  ];
  for (const [name, value, cls] of rows) {
    grid.appendChild(el("dt", undefined, name));
    grid.appendChild(el("dd", cls, value));
  }
  panel.appendChild(grid);
  panel.appendChild(sparkline(stats));
  return panel;
}

function sparkline(stats: SessionStats): SVGSVGElement {
  const width = 220;
  const height = 48;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("class", "f1-chart");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  const scored = stats.history.filter((p) => p.meanF1 !== null);
  svg.dataset.points = String(scored.length);
  if (scored.length > 0) {
    const step = scored.length > 1 ? width / (scored.length - 1) : 0;
    const coords = scored.map((p, i) => {
      const y = height - (p.meanF1 as number) * (height - 4) - 2;
      return `${(i * step).toFixed(1)},${y.toFixed(1)}`;
    });
    const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
    line.setAttribute("points", coords.join(" "));
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "currentColor");
    svg.appendChild(line);
  }
  return svg;
}

function recordPanel(query: QueryView): HTMLElement {
  const panel = el("div", "query-record");
  panel.appendChild(el("span", "record-id", query.record_id));
  if (query.record) {
    panel.appendChild(el("h3", "record-title", query.record.title));
    panel.appendChild(
      el("p", "record-meta", `${query.record.venue}, ${query.record.year}`),
    );
    panel.appendChild(
      el("p", "record-coauthors", query.record.coauthors.join(", ")),
    );
  }
  return panel;
}

function candidateCard(
  query: QueryView,
  candidate: QueryView["candidates"][number],
  state: ConsoleState,
  handlers: ConsoleHandlers,
): HTMLElement {
  const card = el("div", "candidate");
  card.dataset.label = candidate.label;
  card.appendChild(el("span", "candidate-label", candidate.label));
  // the mass is shown exactly as the service reported it
  const mass = el("span", "candidate-mass", String(candidate.posterior));
  card.appendChild(mass);
  if (candidate.representatives.length > 0) {
    card.appendChild(
      el("span", "candidate-reps", candidate.representatives.join(", ")),
    );
  }
  const assign = el("button", "assign", "assign");
  assign.disabled = state.busy;
  assign.addEventListener("click", () => handlers.onAssign(query.index, candidate.label));
  card.appendChild(assign);
  return card;
}

function queryPanel(
  query: QueryView,
  state: ConsoleState,
  handlers: ConsoleHandlers,
  draftName: string,
): HTMLElement {
  const panel = el("section", "query");
  const heading = el("h2", undefined, `who wrote record ${query.index}?`);
  panel.appendChild(heading);
  panel.appendChild(recordPanel(query));
  const gate = el(
    "p",
    "query-gate",
    `entropy ${query.entropy.toFixed(3)} over threshold ${query.threshold.toFixed(3)}`,
  );
  panel.appendChild(gate);
  if (query.seconds_remaining !== null) {
    panel.appendChild(
      el(
        "p",
        "query-countdown",
        `auto-resolves in ${Math.ceil(query.seconds_remaining)}s`,
      ),
    );
  }
  const list = el("div", "candidates");
  for (const candidate of query.candidates) {
    list.appendChild(candidateCard(query, candidate, state, handlers));
  }
  panel.appendChild(list);

  const form = el("form", "new-person");
  const input = el("input", "new-person-name");
  input.type = "text";
  input.placeholder = "somebody else";
  input.value = draftName;
  const button = el("button", "new-person-submit", "new person");
  button.type = "submit";
  button.disabled = state.busy;
  form.appendChild(input);
  form.appendChild(button);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const name = input.value.trim();
    if (name) handlers.onNewPerson(query.index, name);
  });
  panel.appendChild(form);
  return panel;
}

/** Full redraw from state. The typed new-person name survives redraws. */
export function render(
  root: HTMLElement,
  state: ConsoleState,
  handlers: ConsoleHandlers,
): void {
  const draft =
    root.querySelector<HTMLInputElement>("input.new-person-name")?.value ?? "";
  root.replaceChildren();
  if (state.banner) {
    root.appendChild(el("div", "banner", state.banner));
  }
  if (state.notice) {
    root.appendChild(el("div", "notice", state.notice));
  }
  if (state.query) {
    root.appendChild(queryPanel(state.query, state, handlers, draft));
  } else {
    root.appendChild(el("section", "idle", "no query pending"));
  }
  root.appendChild(statsPanel(state.stats));
}
