import type { ApiExplanationView, ApiWindowView } from "../src/types.js";

/** A deterministic breath window with real padding on both sides. */
export function makeWindow(overrides: Partial<ApiWindowView> = {}): ApiWindowView {
  const total = 40;
  const padLeft = 6;
  const padRight = 7;
  const n = total - padLeft - padRight;
  const flow = new Array(total).fill(0);
  const pressure = new Array(total).fill(0);
  for (let i = 0; i < n; i++) {
    flow[padLeft + i] = Math.sin((Math.PI * i) / (n - 1)) * 30 - 5;
    pressure[padLeft + i] = 5 + 15 * Math.exp(-((i - n / 2) ** 2) / 18);
  }
  return {
    breath_id: "rec:000100",
    record_id: "rec",
    start_idx: 100,
    end_idx: 100 + n,
    label: "mechanical",
    confidence: 0.87654,
    distribution: [0.02, 0.03, 0.87654, 0.05, 0.02346],
    annotated_label: "mechanical",
    flow,
    pressure,
    pad_left: padLeft,
    pad_right: padRight,
    resampled: false,
    ...overrides,
  };
}

export function makeExplanation(window: ApiWindowView): ApiExplanationView {
  const total = window.flow.length;
  const combined = Array.from({ length: total }, (_, t) =>
    Math.abs(Math.sin((2 * Math.PI * t) / total)));
  const perVariable = [
    Array.from({ length: total }, (_, t) => (t % 5) / 4),
    Array.from({ length: total }, (_, t) => ((t + 2) % 7) / 6),
  ];
  const firstReal = window.pad_left;
  const lastReal = total - 1 - window.pad_right;
  return {
    breath_id: window.breath_id,
    target_class: window.label,
    combined,
    per_variable: perVariable,
    pad_left: window.pad_left,
    pad_right: window.pad_right,
    display_pad_value_left: [window.flow[firstReal], window.pressure[firstReal]],
    display_pad_value_right: [window.flow[lastReal], window.pressure[lastReal]],
  };
}
