/** Viewer state and navigation over the classified breath list. */

export interface BreathRef {
  breath_id: string;
  start_idx: number;
  end_idx: number;
}

export interface ViewState {
  activeRecord: string | null;
  recordLength: number;
  visibleRange: [number, number];
  selectedBreath: string | null;
  showSeparateExplanation: boolean;
  /** Set when a navigation hit the first/last breath; cleared on the next action. */
  edgeHit: boolean;
}

export type NavigateAction =
  | { kind: "next_breath" }
  | { kind: "prev_breath" }
  | { kind: "jump_to"; idx: number }
  | { kind: "zoom"; range: [number, number] };

export function initialState(): ViewState {
  return {
    activeRecord: null,
    recordLength: 0,
    visibleRange: [0, 0],
    selectedBreath: null,
    showSeparateExplanation: false,
    edgeHit: false,
  };
}

const MIN_SPAN = 16;

function clampRange(range: [number, number], length: number): [number, number] {
  let [from, to] = range;
  from = Math.max(0, Math.min(from, length));
  to = Math.max(0, Math.min(to, length));
  if (to < from) [from, to] = [to, from];
  if (to - from < MIN_SPAN) to = Math.min(length, from + MIN_SPAN);
  return [from, to];
}

/** Scrolls the visible range so the selected breath is fully contained,
 * keeping the span when the breath fits inside it. */
function containBreath(range: [number, number], breath: BreathRef,
                       length: number): [number, number] {
  const span = Math.max(range[1] - range[0], MIN_SPAN);
  const breathSpan = breath.end_idx - breath.start_idx;
  if (breathSpan >= span) {
    return clampRange([breath.start_idx, breath.end_idx], length);
  }
  let [from, to] = range;
  if (breath.start_idx < from || breath.end_idx > to) {
    const center = (breath.start_idx + breath.end_idx) / 2;
    from = Math.round(center - span / 2);
    to = from + span;
    if (from < 0) {
      from = 0;
      to = span;
    }
    if (to > length) {
      to = length;
      from = Math.max(0, length - span);
    }
  }
  return [from, to];
}

export function navigate(
  state: ViewState, breaths: BreathRef[], action: NavigateAction,
): ViewState {
  const next: ViewState = { ...state, edgeHit: false };
  if (action.kind === "zoom") {
    next.visibleRange = clampRange(action.range, state.recordLength);
    return next;
  }
  if (breaths.length === 0) {
    return next;
  }
  const currentIndex = breaths.findIndex((b) => b.breath_id === state.selectedBreath);
  let target = currentIndex;
  if (action.kind === "next_breath") {
    if (currentIndex >= breaths.length - 1) {
      next.edgeHit = currentIndex === breaths.length - 1;
      target = currentIndex;
    } else {
      target = currentIndex + 1;
    }
  } else if (action.kind === "prev_breath") {
    if (currentIndex <= 0) {
      next.edgeHit = currentIndex === 0;
      target = currentIndex;
    } else {
      target = currentIndex - 1;
    }
  } else {
    const hit = breaths.findIndex(
      (b) => b.start_idx <= action.idx && action.idx < b.end_idx,
    );
    if (hit < 0) {
      return next; // index falls outside every classified breath
    }
    target = hit;
  }
  if (target < 0) {
    target = 0;
  }
  const breath = breaths[target];
  next.selectedBreath = breath.breath_id;
  next.visibleRange = containBreath(state.visibleRange, breath, state.recordLength);
  return next;
}
