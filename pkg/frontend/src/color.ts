/** Fixed two-anchor gradient from low importance (blue) to high (red). */

const LOW: [number, number, number] = [38, 84, 214];
const HIGH: [number, number, number] = [214, 40, 40];

export function heatColor(value: number): string {
  const v = Math.min(1, Math.max(0, value));
  const channel = (i: number) => Math.round(LOW[i] + (HIGH[i] - LOW[i]) * v);
  return `rgb(${channel(0)}, ${channel(1)}, ${channel(2)})`;
}

/** Curve colors follow the display convention: flow red, pressure blue. */
export const CURVE_COLORS = ["#c81e1e", "#1d4ed8"];
