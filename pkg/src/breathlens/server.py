"""Read-only HTTP service exposing records, segmented breaths,
classifications, and explanations to the viewer.

All breaths are segmented and classified once at startup so list views carry
labels; explanations are computed lazily per breath and cached (write-once,
guarded per breath id).
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

from .gradcam import Explanation, explain, explain_for_prediction
from .io import AnnotationSet, BreathClass, WaveformRecord, load_annotations, load_record
from .model import XcmModel, classify_batch, forward_with_cache
from .segmentation import BreathSegment, SampleWindow, fixed_length, segment_breaths

DEFAULT_PORT = 8350
PORT_ENV_VAR = "BREATHLENS_PORT"


def decimate_indices(values: np.ndarray, max_points: int) -> np.ndarray:
    """Indices of a peak-preserving decimation: every bucket contributes its
    min and max position, so peaks survive plotting."""
    n = len(values)
    if max_points < 2:
        raise ValueError("max_points must be at least 2")
    if n <= max_points:
        return np.arange(n)
    n_buckets = max_points // 2
    edges = np.linspace(0, n, n_buckets + 1).astype(int)
    keep: set[int] = {0, n - 1}
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        bucket = values[lo:hi]
        keep.add(lo + int(np.argmin(bucket)))
        keep.add(lo + int(np.argmax(bucket)))
    return np.asarray(sorted(keep))


@dataclass
class _BreathEntry:
    breath_id: str
    segment: BreathSegment
    window: SampleWindow
    label: str
    confidence: float
    distribution: list[float]
    annotated_label: Optional[str]


@dataclass
class ServiceState:
    model: XcmModel
    records: dict[str, WaveformRecord]
    breaths: dict[str, _BreathEntry]  # breath_id -> entry
    breaths_by_record: dict[str, list[str]]
    explanations: dict[str, dict] = field(default_factory=dict)
    locks: dict[str, threading.Lock] = field(default_factory=dict)

    def lock_for(self, breath_id: str) -> threading.Lock:
        return self.locks.setdefault(breath_id, threading.Lock())


def _annotation_lookup(annotations: Optional[AnnotationSet]) -> dict[tuple[int, int], str]:
    if annotations is None:
        return {}
    return {
        (e.start_idx, e.end_idx): e.label.label
        for e in annotations.entries
        if e.label is not None
    }


def build_state(
    model: XcmModel,
    records: list[WaveformRecord],
    annotations: Optional[dict[str, AnnotationSet]] = None,
) -> ServiceState:
    """Segment and classify every record's breaths up front."""
    annotations = annotations or {}
    state = ServiceState(model=model, records={}, breaths={}, breaths_by_record={})
    t_len = model.config.window_samples
    for record in records:
        state.records[record.record_id] = record
        segments = segment_breaths(record)
        ids: list[str] = []
        if segments:
            windows = [fixed_length(seg, t_len) for seg in segments]
            stacked = np.stack([w.values for w in windows])
            labels, probs = classify_batch(model, stacked)
            known = _annotation_lookup(annotations.get(record.record_id))
            for seg, window, label, prob in zip(segments, windows, labels, probs):
                breath_id = f"{record.record_id}:{seg.start_idx:06d}"
                entry = _BreathEntry(
                    breath_id=breath_id,
                    segment=seg,
                    window=window,
                    label=BreathClass(int(label)).label,
                    confidence=float(prob[int(label)]),
                    distribution=[float(p) for p in prob],
                    annotated_label=known.get((seg.start_idx, seg.end_idx)),
                )
                state.breaths[breath_id] = entry
                ids.append(breath_id)
        state.breaths_by_record[record.record_id] = ids
    return state


def load_data_dir(data_dir) -> tuple[list[WaveformRecord], dict[str, AnnotationSet]]:
    """Record CSVs are ``<id>.csv``; annotations, if present, are
    ``<id>.annotations.csv``."""
    data_dir = Path(data_dir)
    records = []
    annotations = {}
    for path in sorted(data_dir.glob("*.csv")):
        if path.name.endswith(".annotations.csv"):
            continue
        record = load_record(path)
        records.append(record)
        ann_path = path.with_name(path.stem + ".annotations.csv")
        if ann_path.exists():
            annotations[record.record_id] = load_annotations(ann_path, record)
    return records, annotations


def _window_view(entry: _BreathEntry) -> dict:
    seg = entry.segment
    window = entry.window
    return {
        "breath_id": entry.breath_id,
        "record_id": seg.record_id,
        "start_idx": seg.start_idx,
        "end_idx": seg.end_idx,
        "label": entry.label,
        "confidence": entry.confidence,
        "distribution": entry.distribution,
        "annotated_label": entry.annotated_label,
        # fixed-length network input; padding slots hold zeros
        "flow": window.values[0].tolist(),
        "pressure": window.values[1].tolist(),
        "pad_left": window.pad_left,
        "pad_right": window.pad_right,
        "resampled": window.resampled,
    }


def _explanation_view(entry: _BreathEntry, explanation: Explanation) -> dict:
    window = entry.window
    t_len = window.length
    first = window.pad_left
    last = t_len - 1 - window.pad_right
    return {
        "breath_id": entry.breath_id,
        "target_class": explanation.target_class.label,
        "combined": explanation.combined.tolist(),
        "per_variable": explanation.per_variable.tolist(),
        "pad_left": window.pad_left,
        "pad_right": window.pad_right,
        "display_pad_value_left": [float(window.values[0, first]), float(window.values[1, first])],
        "display_pad_value_right": [float(window.values[0, last]), float(window.values[1, last])],
    }


def create_app(state: ServiceState, static_dir=None) -> FastAPI:
    app = FastAPI(title="breathlens", docs_url=None, redoc_url=None)
    model = state.model
    n_vars = model.config.n_variables
    t_len = model.config.window_samples

    @app.get("/api/records")
    def list_records() -> list[str]:
        return sorted(state.records)

    @app.get("/api/records/{record_id}")
    def get_record(
        record_id: str,
        from_idx: int = Query(default=0, ge=0),
        to_idx: Optional[int] = Query(default=None, ge=0),
        max_points: int = Query(default=2000, ge=2),
    ) -> dict:
        record = state.records.get(record_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown record {record_id!r}")
        end = len(record) if to_idx is None else min(to_idx, len(record))
        start = min(from_idx, end)
        flow = record.flow[start:end]
        pressure = record.pressure[start:end]
        # indices chosen on flow keep both channels sampled at the same spots;
        # add pressure extrema so its peaks survive as well
        per_channel = max(2, max_points // 2)
        keep = set(decimate_indices(flow, per_channel).tolist())
        keep.update(decimate_indices(pressure, per_channel).tolist())
        idx = np.asarray(sorted(keep), dtype=int) if len(flow) else np.arange(0)
        return {
            "record_id": record_id,
            "n_samples": len(record),
            "sample_rate_hz": record.sample_rate_hz,
            "from_idx": start,
            "to_idx": end,
            "indices": (idx + start).tolist(),
            "flow": flow[idx].tolist(),
            "pressure": pressure[idx].tolist(),
        }

    @app.get("/api/records/{record_id}/breaths")
    def list_breaths(record_id: str) -> list[dict]:
        ids = state.breaths_by_record.get(record_id)
        if ids is None:
            raise HTTPException(status_code=404, detail=f"unknown record {record_id!r}")
        return [_window_view(state.breaths[b]) for b in ids]

    @app.get("/api/breaths/{breath_id}/explanation")
    def breath_explanation(breath_id: str) -> dict:
        entry = state.breaths.get(breath_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown breath {breath_id!r}")
        cached = state.explanations.get(breath_id)
        if cached is not None:
            return cached
        with state.lock_for(breath_id):
            cached = state.explanations.get(breath_id)
            if cached is None:
                _, explanation = explain_for_prediction(model, entry.window)
                cached = _explanation_view(entry, explanation)
                state.explanations[breath_id] = cached
        return cached

    @app.post("/api/classify")
    def classify_window(payload: dict) -> dict:
        values = payload.get("values")
        if values is None:
            raise HTTPException(status_code=400, detail="body must carry 'values'")
        try:
            arr = np.asarray(values, dtype=np.float64)
        except (TypeError, ValueError):
            raise HTTPException(status_code=400, detail="'values' must be numeric") from None
        if arr.ndim != 2 or arr.shape != (n_vars, t_len):
            raise HTTPException(
                status_code=400,
                detail=f"expected a {n_vars}x{t_len} window (D={n_vars} variables, "
                f"T={t_len} samples), got {'x'.join(str(s) for s in arr.shape)}",
            )
        classification, cache = forward_with_cache(model, arr)
        explanation = explain(model, cache, classification.label)
        return {
            "label": classification.label.label,
            "confidence": classification.confidence,
            "distribution": classification.distribution.tolist(),
            "explanation": {
                "target_class": explanation.target_class.label,
                "combined": explanation.combined.tolist(),
                "per_variable": explanation.per_variable.tolist(),
            },
        }

    if static_dir is not None and Path(static_dir).is_dir():
        static_path = Path(static_dir)

        @app.get("/")
        def index() -> FileResponse:
            return FileResponse(static_path / "index.html")

        app.mount("/", StaticFiles(directory=static_path), name="static")

    return app


def serve(model: XcmModel, data_dir, port: int, host: str = "127.0.0.1",
          static_dir=None) -> None:
    import uvicorn

    records, annotations = load_data_dir(data_dir)
    state = build_state(model, records, annotations)
    app = create_app(state, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
