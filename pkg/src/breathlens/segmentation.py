"""Zero-crossing breath segmentation and fixed-length window construction.

A candidate breath starts where flow crosses from negative to non-negative
(start of an inspiration, and end of the previous breath). Segments are the
half-open spans between consecutive crossings; data before the first and
after the last crossing is discarded as incomplete.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .io import BreathClass, WaveformRecord

# 5 s of data at the 125 Hz acquisition rate
DEFAULT_WINDOW_SAMPLES = 625
N_VARIABLES = 2  # row 0 flow, row 1 pressure


class SequenceTooShort(Exception):
    pass


@dataclass(frozen=True)
class BreathSegment:
    """A candidate breath between two flow zero-crossings (end exclusive)."""

    record_id: str
    start_idx: int
    end_idx: int
    flow: np.ndarray
    pressure: np.ndarray
    label: Optional[BreathClass] = None

    def __post_init__(self):
        n = self.end_idx - self.start_idx
        if n < 2:
            raise ValueError(f"segment [{self.start_idx}, {self.end_idx}) is too short")
        if len(self.flow) != n or len(self.pressure) != n:
            raise ValueError("segment index span does not match sample count")

    def __len__(self) -> int:
        return self.end_idx - self.start_idx


@dataclass(frozen=True)
class SampleWindow:
    """Fixed-length D x T network input built from one segment."""

    values: np.ndarray  # (N_VARIABLES, T), row 0 flow, row 1 pressure
    pad_left: int
    pad_right: int
    resampled: bool
    source: tuple[str, int, int]  # (record_id, start_idx, end_idx)

    @property
    def length(self) -> int:
        return self.values.shape[1]


def detect_crossings(flow: np.ndarray) -> np.ndarray:
    """Indices i >= 1 with flow[i-1] < 0 and flow[i] >= 0, ascending.

    Exact zero counts as the crossed (non-negative) side, so crossings that
    plateau at zero are not missed.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 1 or len(flow) < 2:
        raise SequenceTooShort("need a 1-D sequence of at least 2 samples")
    return np.flatnonzero((flow[:-1] < 0.0) & (flow[1:] >= 0.0)) + 1


def segment_breaths(record: WaveformRecord) -> list[BreathSegment]:
    """One segment per consecutive crossing pair; fewer than 2 crossings -> []."""
    crossings = detect_crossings(record.flow)
    segments = []
    for start, end in zip(crossings[:-1], crossings[1:]):
        segments.append(
            BreathSegment(
                record_id=record.record_id,
                start_idx=int(start),
                end_idx=int(end),
                flow=record.flow[start:end],
                pressure=record.pressure[start:end],
            )
        )
    return segments


def fixed_length(segment: BreathSegment, window_samples: int = DEFAULT_WINDOW_SAMPLES) -> SampleWindow:
    """Zero-pad bilaterally (odd remainder to the right) or, for segments longer
    than the window, linearly resample onto ``window_samples`` equidistant points
    preserving the first and last samples."""
    values, pad_left, pad_right, resampled = _fixed_length_arrays(
        segment.flow, segment.pressure, window_samples
    )
    return SampleWindow(
        values=values,
        pad_left=pad_left,
        pad_right=pad_right,
        resampled=resampled,
        source=(segment.record_id, segment.start_idx, segment.end_idx),
    )


def _fixed_length_arrays(
    flow: np.ndarray, pressure: np.ndarray, window_samples: int
) -> tuple[np.ndarray, int, int, bool]:
    if window_samples < 2:
        raise ValueError("window_samples must be at least 2")
    n = len(flow)
    if n < 2:
        raise SequenceTooShort("segment must have at least 2 samples")
    values = np.zeros((N_VARIABLES, window_samples), dtype=np.float64)
    if n <= window_samples:
        pad_left = (window_samples - n) // 2
        pad_right = window_samples - n - pad_left
        values[0, pad_left : pad_left + n] = flow
        values[1, pad_left : pad_left + n] = pressure
        return values, pad_left, pad_right, False
    positions = np.linspace(0.0, n - 1, window_samples)
    source = np.arange(n, dtype=np.float64)
    values[0] = np.interp(positions, source, flow)
    values[1] = np.interp(positions, source, pressure)
    return values, 0, 0, True


def segments_to_annotation_csv(segments: list[BreathSegment], path) -> None:
    """Export segments in the annotation CSV format (label empty when unlabeled)."""
    from .io import AnnotationEntry, AnnotationSet, write_annotations

    if not segments:
        write_annotations(AnnotationSet(record_id="", entries=()), path)
        return
    record_id = segments[0].record_id
    entries = tuple(
        AnnotationEntry(s.start_idx, s.end_idx, s.label)
        for s in sorted(segments, key=lambda s: s.start_idx)
    )
    write_annotations(AnnotationSet(record_id=record_id, entries=entries), path)
