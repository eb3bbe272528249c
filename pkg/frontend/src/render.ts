/**
 * Breath detail rendering.
 *
 * Layering, bottom to top: heatmap bands (combined explanation), padding
 * hatches, then the two curves. Flow occupies the upper half of the plot,
 * pressure the lower half; both share the time axis, and each sample sits
 * centered in its heatmap band. Curves are drawn as per-sample segments so
 * the separate explanation can modulate stroke opacity per sample without
 * touching the geometry.
 */
import { CURVE_COLORS, heatColor } from "./color.js";
import { PlotView, bandLeft, bandWidth, makeScale, sampleX } from "./geometry.js";
import type { ViewState } from "./state.js";
import type { ApiExplanationView, ApiWindowView } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const BASE_CURVE_ALPHA = 0.95;
const MIN_SEPARATE_ALPHA = 0.15;

/** Padding slots are drawn flat at the nearest real sample, never at the
 * zeros the network actually consumes. */
export function displayValues(window: ApiWindowView, variable: 0 | 1): number[] {
  const raw = variable === 0 ? window.flow : window.pressure;
  const total = raw.length;
  const firstReal = window.pad_left;
  const lastReal = total - 1 - window.pad_right;
  const out = raw.slice();
  for (let t = 0; t < firstReal; t++) {
    out[t] = raw[firstReal];
  }
  for (let t = lastReal + 1; t < total; t++) {
    out[t] = raw[lastReal];
  }
  return out;
}

export function formatHeader(window: ApiWindowView): string {
  return `${window.label} (${(window.confidence * 100).toFixed(1)}%)`;
}

function div(className: string): HTMLDivElement {
  const el = document.createElement("div");
  el.className = className;
  return el;
}

function segmentAlpha(
  explanation: ApiExplanationView | null, state: ViewState,
  variable: number, t: number,
): number {
  if (!state.showSeparateExplanation || explanation === null) {
    return BASE_CURVE_ALPHA;
  }
  const row = explanation.per_variable[variable];
  const importance = (row[t] + row[Math.min(t + 1, row.length - 1)]) / 2;
  return MIN_SEPARATE_ALPHA + (1 - MIN_SEPARATE_ALPHA) * importance;
}

function renderBands(
  plot: HTMLElement, explanation: ApiExplanationView | null, view: PlotView,
): void {
  const layer = div("heatmap-layer");
  layer.style.cssText = "position:absolute;inset:0;";
  const width = bandWidth(view);
  for (let t = 0; t < view.samples; t++) {
    const band = div("heat-band");
    const value = explanation === null ? 0 : explanation.combined[t];
    band.dataset.t = String(t);
    band.style.position = "absolute";
    band.style.left = `${bandLeft(t, view)}px`;
    band.style.width = `${width}px`;
    band.style.top = "0";
    band.style.height = `${view.height}px`;
    band.style.backgroundColor = heatColor(value);
    band.style.opacity = "0.35";
    layer.appendChild(band);
  }
  plot.appendChild(layer);
}

function renderPaddingHatches(
  plot: HTMLElement, window: ApiWindowView, view: PlotView,
): void {
  const spans: Array<[number, number]> = [];
  if (window.pad_left > 0) {
    spans.push([0, window.pad_left]);
  }
  if (window.pad_right > 0) {
    spans.push([view.samples - window.pad_right, view.samples]);
  }
  for (const [from, to] of spans) {
    const hatch = div("pad-hatch");
    hatch.style.position = "absolute";
    hatch.style.left = `${bandLeft(from, view)}px`;
    hatch.style.width = `${bandLeft(to, view) - bandLeft(from, view)}px`;
    hatch.style.top = "0";
    hatch.style.height = `${view.height}px`;
    hatch.title = "zero padding (displayed flat at the boundary value)";
    plot.appendChild(hatch);
  }
}

function renderCurve(
  svg: SVGSVGElement, values: number[], variable: 0 | 1,
  explanation: ApiExplanationView | null, state: ViewState, view: PlotView,
): void {
  const half = view.height / 2;
  const top = variable === 0 ? 0 : half;
  const scale = makeScale(values, top, half);
  for (let t = 0; t < values.length - 1; t++) {
    const segment = document.createElementNS(SVG_NS, "line");
    segment.setAttribute("x1", String(sampleX(t, view)));
    segment.setAttribute("y1", String(scale.y(values[t])));
    segment.setAttribute("x2", String(sampleX(t + 1, view)));
    segment.setAttribute("y2", String(scale.y(values[t + 1])));
    segment.setAttribute("stroke", CURVE_COLORS[variable]);
    segment.setAttribute("stroke-width", "1.4");
    segment.setAttribute("stroke-opacity", String(segmentAlpha(explanation, state, variable, t)));
    segment.setAttribute("data-variable", String(variable));
    segment.setAttribute("data-t", String(t));
    svg.appendChild(segment);
  }
}

export function renderBreath(
  container: HTMLElement,
  window: ApiWindowView,
  explanation: ApiExplanationView | null,
  state: ViewState,
  view: PlotView,
): void {
  container.textContent = "";

  const header = div("breath-header");
  const title = document.createElement("span");
  title.className = "breath-title";
  title.textContent = formatHeader(window);
  header.appendChild(title);
  if (window.annotated_label) {
    const annotated = document.createElement("span");
    annotated.className = "annotated-label";
    annotated.textContent = `annotated: ${window.annotated_label}`;
    header.appendChild(annotated);
  }
  if (explanation === null) {
    const badge = div("explanation-unavailable");
    badge.textContent = "explanation unavailable";
    header.appendChild(badge);
  }
  container.appendChild(header);

  const plot = div("breath-plot");
  plot.style.position = "relative";
  plot.style.width = `${view.width}px`;
  plot.style.height = `${view.height}px`;
  renderBands(plot, explanation, view);
  renderPaddingHatches(plot, window, view);

  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(view.width));
  svg.setAttribute("height", String(view.height));
  svg.style.cssText = "position:absolute;inset:0;";
  renderCurve(svg, displayValues(window, 0), 0, explanation, state, view);
  renderCurve(svg, displayValues(window, 1), 1, explanation, state, view);
  plot.appendChild(svg);
  container.appendChild(plot);
}
