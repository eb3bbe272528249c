/** Payload shapes of the breathlens HTTP API (snake_case as served). */

export interface ApiWindowView {
  breath_id: string;
  record_id: string;
  start_idx: number;
  end_idx: number;
  label: string;
  confidence: number;
  distribution: number[];
  annotated_label: string | null;
  /** Fixed-length network input; padding slots hold zeros. */
  flow: number[];
  pressure: number[];
  pad_left: number;
  pad_right: number;
  resampled: boolean;
}

export interface ApiExplanationView {
  breath_id: string;
  target_class: string;
  combined: number[];
  per_variable: number[][];
  pad_left: number;
  pad_right: number;
  display_pad_value_left: number[];
  display_pad_value_right: number[];
}

export interface RecordSlice {
  record_id: string;
  n_samples: number;
  sample_rate_hz: number;
  from_idx: number;
  to_idx: number;
  indices: number[];
  flow: number[];
  pressure: number[];
}
