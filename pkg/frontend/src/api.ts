import type { ApiExplanationView, ApiWindowView, RecordSlice } from "./types.js";

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new Error(`${url} -> ${response.status}`);
  }
  return (await response.json()) as T;
}

export function listRecords(): Promise<string[]> {
  return getJson("/api/records");
}

export function getRecordSlice(
  recordId: string, fromIdx: number, toIdx: number, maxPoints = 1600,
): Promise<RecordSlice> {
  const params = new URLSearchParams({
    from_idx: String(Math.floor(fromIdx)),
    to_idx: String(Math.ceil(toIdx)),
    max_points: String(maxPoints),
  });
  return getJson(`/api/records/${encodeURIComponent(recordId)}?${params}`);
}

export function listBreaths(recordId: string): Promise<ApiWindowView[]> {
  return getJson(`/api/records/${encodeURIComponent(recordId)}/breaths`);
}

export function getExplanation(breathId: string): Promise<ApiExplanationView> {
  return getJson(`/api/breaths/${encodeURIComponent(breathId)}/explanation`);
}

/**
 * Guards async updates against stale responses: each acquire() invalidates
 * all previous tickets, and apply() runs only for the newest one.
 */
export function makeStaleGuard() {
  let latest = 0;
  return {
    acquire(): number {
      return ++latest;
    },
    apply(ticket: number, fn: () => void): boolean {
      if (ticket !== latest) {
        return false;
      }
      fn();
      return true;
    },
  };
}
