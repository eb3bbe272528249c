/**
 * Pixel geometry of the breath plot.
 *
 * The time axis is divided into one vertical band per sample; sample t is
 * drawn at the center of band t, so heatmap band t spans exactly the
 * horizontal extent that sample t occupies. All positions are kept as
 * floats; nothing is rounded before it reaches the DOM.
 */

export interface PlotView {
  width: number; // px
  height: number; // px
  samples: number; // T
}

export function bandWidth(view: PlotView): number {
  return view.width / view.samples;
}

export function bandLeft(t: number, view: PlotView): number {
  return (t * view.width) / view.samples;
}

export function sampleX(t: number, view: PlotView): number {
  return ((t + 0.5) * view.width) / view.samples;
}

export interface YScale {
  y(value: number): number;
}

/** Maps a value range onto a pixel row band [top, top+height]. */
export function makeScale(
  values: number[], top: number, height: number, marginFrac = 0.1,
): YScale {
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (hi === lo) {
    hi = lo + 1;
    lo = lo - 1;
  }
  const margin = (hi - lo) * marginFrac;
  lo -= margin;
  hi += margin;
  return {
    y: (value: number) => top + height - ((value - lo) / (hi - lo)) * height,
  };
}
