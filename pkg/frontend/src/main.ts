import { getExplanation, getRecordSlice, listBreaths, listRecords, makeStaleGuard } from "./api.js";
import { renderBreath } from "./render.js";
import { BreathRef, NavigateAction, ViewState, initialState, navigate } from "./state.js";
import type { ApiExplanationView, ApiWindowView } from "./types.js";

const PLOT_WIDTH = 940;
const PLOT_HEIGHT = 360;
const OVERVIEW_HEIGHT = 120;
const ZOOM_SPANS = [1250, 3750, 12500]; // 10 s / 30 s / 100 s at 125 Hz

interface App {
  state: ViewState;
  breaths: ApiWindowView[];
  explanations: Map<string, ApiExplanationView>;
}

const app: App = {
  state: initialState(),
  breaths: [],
  explanations: new Map(),
};

const overviewGuard = makeStaleGuard();
const breathGuard = makeStaleGuard();

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing #${id}`);
  }
  return found as T;
}

function breathRefs(): BreathRef[] {
  return app.breaths.map((b) => ({
    breath_id: b.breath_id, start_idx: b.start_idx, end_idx: b.end_idx,
  }));
}

function selectedBreath(): ApiWindowView | null {
  return app.breaths.find((b) => b.breath_id === app.state.selectedBreath) ?? null;
}

async function refreshOverview(): Promise<void> {
  if (!app.state.activeRecord) {
    return;
  }
  const ticket = overviewGuard.acquire();
  const [from, to] = app.state.visibleRange;
  const slice = await getRecordSlice(app.state.activeRecord, from, to, 1600);
  overviewGuard.apply(ticket, () => {
    const svg = el<HTMLElement>("overview");
    svg.textContent = "";
    const width = PLOT_WIDTH;
    const span = Math.max(1, slice.to_idx - slice.from_idx);
    const x = (idx: number) => ((idx - slice.from_idx) / span) * width;
    const lo = Math.min(...slice.flow);
    const hi = Math.max(...slice.flow);
    const y = (v: number) =>
      OVERVIEW_HEIGHT - ((v - lo) / Math.max(1e-9, hi - lo)) * (OVERVIEW_HEIGHT - 8) - 4;
    const points = slice.indices
      .map((idx, i) => `${x(idx).toFixed(2)},${y(slice.flow[i]).toFixed(2)}`)
      .join(" ");
    const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
    line.setAttribute("points", points);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "#c81e1e");
    line.setAttribute("stroke-width", "1");
    svg.appendChild(line);
    const chosen = selectedBreath();
    if (chosen && chosen.end_idx > slice.from_idx && chosen.start_idx < slice.to_idx) {
      const mark = document.createElementNS("http://www.w3.org/2000/svg", "rect");
      mark.setAttribute("x", String(x(Math.max(chosen.start_idx, slice.from_idx))));
      mark.setAttribute("width", String(
        x(Math.min(chosen.end_idx, slice.to_idx)) - x(Math.max(chosen.start_idx, slice.from_idx)),
      ));
      mark.setAttribute("y", "0");
      mark.setAttribute("height", String(OVERVIEW_HEIGHT));
      mark.setAttribute("class", "overview-selection");
      svg.appendChild(mark);
    }
  });
}

async function refreshBreathPanel(): Promise<void> {
  const container = el<HTMLDivElement>("breath-panel");
  const breath = selectedBreath();
  if (!breath) {
    container.textContent = "select a breath";
    return;
  }
  const view = { width: PLOT_WIDTH, height: PLOT_HEIGHT, samples: breath.flow.length };
  const ticket = breathGuard.acquire();
  let explanation = app.explanations.get(breath.breath_id) ?? null;
  if (explanation === null) {
    try {
      explanation = await getExplanation(breath.breath_id);
      app.explanations.set(breath.breath_id, explanation);
    } catch {
      explanation = null;
    }
  }
  breathGuard.apply(ticket, () => {
    renderBreath(container, breath, explanation, app.state, view);
    el<HTMLDivElement>("edge-cue").classList.toggle("visible", app.state.edgeHit);
  });
}

function refreshBreathList(): void {
  const list = el<HTMLUListElement>("breath-list");
  list.textContent = "";
  for (const breath of app.breaths) {
    const item = document.createElement("li");
    item.textContent =
      `${breath.start_idx}  ${breath.label} ${(breath.confidence * 100).toFixed(1)}%` +
      (breath.annotated_label ? ` [${breath.annotated_label}]` : "");
    item.dataset.breathId = breath.breath_id;
    if (breath.breath_id === app.state.selectedBreath) {
      item.classList.add("selected");
    }
    item.addEventListener("click", () =>
      dispatch({ kind: "jump_to", idx: breath.start_idx }));
    list.appendChild(item);
  }
}

async function refreshAll(): Promise<void> {
  refreshBreathList();
  await Promise.all([refreshOverview(), refreshBreathPanel()]);
}

function dispatch(action: NavigateAction): void {
  app.state = navigate(app.state, breathRefs(), action);
  void refreshAll();
}

async function selectRecord(recordId: string): Promise<void> {
  const breaths = await listBreaths(recordId);
  app.breaths = breaths;
  app.explanations.clear();
  const slice = await getRecordSlice(recordId, 0, 1, 2);
  app.state = {
    ...initialState(),
    activeRecord: recordId,
    recordLength: slice.n_samples,
    visibleRange: [0, Math.min(slice.n_samples, ZOOM_SPANS[1])],
    selectedBreath: breaths.length ? breaths[0].breath_id : null,
    showSeparateExplanation: app.state.showSeparateExplanation,
  };
  await refreshAll();
}

async function boot(): Promise<void> {
  const records = await listRecords();
  const select = el<HTMLSelectElement>("record-select");
  select.textContent = "";
  for (const id of records) {
    const option = document.createElement("option");
    option.value = id;
    option.textContent = id;
    select.appendChild(option);
  }
  select.addEventListener("change", () => void selectRecord(select.value));

  el<HTMLButtonElement>("prev-breath").addEventListener("click", () =>
    dispatch({ kind: "prev_breath" }));
  el<HTMLButtonElement>("next-breath").addEventListener("click", () =>
    dispatch({ kind: "next_breath" }));
  const toggle = el<HTMLInputElement>("separate-toggle");
  toggle.addEventListener("change", () => {
    app.state = { ...app.state, showSeparateExplanation: toggle.checked };
    void refreshBreathPanel();
  });
  ZOOM_SPANS.forEach((span, i) => {
    el<HTMLButtonElement>(`zoom-${i}`).addEventListener("click", () => {
      const breath = selectedBreath();
      const center = breath
        ? (breath.start_idx + breath.end_idx) / 2
        : (app.state.visibleRange[0] + app.state.visibleRange[1]) / 2;
      dispatch({ kind: "zoom", range: [center - span / 2, center + span / 2] });
    });
  });

  if (records.length) {
    select.value = records[0];
    await selectRecord(records[0]);
  }
}

void boot();
