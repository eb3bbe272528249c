"""Loading, persisting, and splitting flow/pressure records and breath annotations.

Owns the on-disk formats:

* record CSV       -- header ``timestamp_ms,flow,pressure``, one sample per row,
                      timestamps strictly increasing integers
* annotation CSV   -- header ``start_idx,end_idx,label``, index-based half-open
                      intervals, lowercase label words (empty = unlabeled)
* split manifest   -- one ``record_id,partition`` row per record
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .segmentation import BreathSegment

DEFAULT_SAMPLE_RATE_HZ = 125.0

RECORD_HEADER = ["timestamp_ms", "flow", "pressure"]
ANNOTATION_HEADER = ["start_idx", "end_idx", "label"]


class WaveformError(Exception):
    """Base class for data-format errors raised by this module."""


class MalformedRow(WaveformError):
    pass


class EmptyFile(WaveformError):
    pass


class UnsortedTimestamps(WaveformError):
    pass


class OutOfRangeIndex(WaveformError):
    pass


class OverlappingEntries(WaveformError):
    pass


class UnknownLabel(WaveformError):
    pass


class InsufficientRecords(WaveformError):
    pass


class BreathClass(IntEnum):
    """Breath taxonomy; integer codes are stable across persistence."""

    ARTEFACT = 0
    SPONTANEOUS = 1
    MECHANICAL = 2
    TRIGGERED = 3
    UNCLASSIFIABLE = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> "BreathClass":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise UnknownLabel(f"unknown breath label {text!r}") from None


N_CLASSES = len(BreathClass)
CLASS_LABELS = [c.label for c in BreathClass]


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class WaveformRecord:
    """A patient's flow and pressure streams at a fixed sample rate."""

    record_id: str
    flow: np.ndarray  # mL/s
    pressure: np.ndarray  # mbar
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    start_time_ms: int = 0

    def __post_init__(self):
        object.__setattr__(self, "flow", _readonly(np.atleast_1d(self.flow)))
        object.__setattr__(self, "pressure", _readonly(np.atleast_1d(self.pressure)))
        if len(self.flow) != len(self.pressure):
            raise ValueError("flow and pressure must have identical length")
        if len(self.flow) < 1:
            raise ValueError("record must contain at least one sample")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.flow)

    @property
    def duration_s(self) -> float:
        return len(self.flow) / self.sample_rate_hz

    def timestamps_ms(self) -> np.ndarray:
        step = 1000.0 / self.sample_rate_hz
        return self.start_time_ms + np.rint(np.arange(len(self)) * step).astype(np.int64)


class AnnotationEntry(NamedTuple):
    start_idx: int
    end_idx: int
    label: Optional[BreathClass]


@dataclass(frozen=True)
class AnnotationSet:
    """Sorted, non-overlapping labeled index intervals over one record."""

    record_id: str
    entries: tuple[AnnotationEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        prev_end = None
        for e in self.entries:
            if not (0 <= e.start_idx < e.end_idx):
                raise OutOfRangeIndex(f"bad interval [{e.start_idx}, {e.end_idx})")
            if prev_end is not None and e.start_idx < prev_end:
                raise OverlappingEntries(
                    f"entry starting at {e.start_idx} overlaps previous end {prev_end}"
                )
            prev_end = e.end_idx

    def __len__(self) -> int:
        return len(self.entries)

    def check_bounds(self, record_length: int) -> None:
        for e in self.entries:
            if e.end_idx > record_length:
                raise OutOfRangeIndex(
                    f"entry [{e.start_idx}, {e.end_idx}) exceeds record length {record_length}"
                )


def _format_value(v: float) -> str:
    # repr() gives the shortest string that round-trips a float64
    return repr(float(v))


def load_record(path, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> WaveformRecord:
    """Parse a record CSV. Raises MalformedRow / EmptyFile / UnsortedTimestamps."""
    path = Path(path)
    timestamps: list[int] = []
    flow: list[float] = []
    pressure: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: empty file")
        if [h.strip() for h in header] != RECORD_HEADER:
            raise MalformedRow(f"{path}: expected header {','.join(RECORD_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                ts = int(row[0])
                f = float(row[1])
                p = float(row[2])
            except ValueError:
                raise MalformedRow(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
            if timestamps and ts <= timestamps[-1]:
                raise UnsortedTimestamps(
                    f"{path}:{lineno}: timestamp {ts} not after {timestamps[-1]}"
                )
            timestamps.append(ts)
            flow.append(f)
            pressure.append(p)
    if not timestamps:
        raise EmptyFile(f"{path}: no data rows")
    return WaveformRecord(
        record_id=path.stem,
        flow=np.asarray(flow),
        pressure=np.asarray(pressure),
        sample_rate_hz=sample_rate_hz,
        start_time_ms=timestamps[0],
    )


def write_record(record: WaveformRecord, path) -> None:
    path = Path(path)
    ts = record.timestamps_ms()
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_HEADER)
        for i in range(len(record)):
            writer.writerow(
                [int(ts[i]), _format_value(record.flow[i]), _format_value(record.pressure[i])]
            )


def load_annotations(path, record: WaveformRecord) -> AnnotationSet:
    """Parse an annotation CSV and validate it against ``record``."""
    path = Path(path)
    entries: list[AnnotationEntry] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: empty file")
        if [h.strip() for h in header] != ANNOTATION_HEADER:
            raise MalformedRow(f"{path}: expected header {','.join(ANNOTATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                start = int(row[0])
                end = int(row[1])
            except ValueError:
                raise MalformedRow(f"{path}:{lineno}: non-integer index in {row!r}") from None
            text = row[2].strip()
            label = BreathClass.from_label(text) if text else None
            if not (0 <= start < end <= len(record)):
                raise OutOfRangeIndex(
                    f"{path}:{lineno}: [{start}, {end}) out of range for length {len(record)}"
                )
            entries.append(AnnotationEntry(start, end, label))
    entries.sort(key=lambda e: e.start_idx)
    return AnnotationSet(record_id=record.record_id, entries=tuple(entries))


def write_annotations(annotations: AnnotationSet, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for e in annotations.entries:
            writer.writerow(
                [e.start_idx, e.end_idx, e.label.label if e.label is not None else ""]
            )


@dataclass
class SplitDataset:
    """Labeled windows partitioned at whole-record (patient) granularity."""

    train: list["BreathSegment"] = field(default_factory=list)
    validation: list["BreathSegment"] = field(default_factory=list)
    test: list["BreathSegment"] = field(default_factory=list)
    split_manifest: dict[str, str] = field(default_factory=dict)

    def partition(self, name: str) -> list["BreathSegment"]:
        if name not in ("train", "validation", "test"):
            raise ValueError(f"unknown partition {name!r}")
        return getattr(self, name)


def split_dataset(
    records: Sequence[tuple[WaveformRecord, AnnotationSet]],
    seed: int,
    n_validation_records: int,
    n_test_records: int,
    manifest_path=None,
) -> SplitDataset:
    """Randomly assign whole records to train/validation/test partitions.

    Deterministic for a fixed seed. Windows are the labeled annotation
    intervals of each record; unlabeled entries are skipped. Test records
    never contribute windows to train or validation.
    """
    from .segmentation import BreathSegment

    if n_validation_records < 0 or n_test_records < 0:
        raise ValueError("partition sizes must be non-negative")
    if n_validation_records + n_test_records >= len(records):
        raise InsufficientRecords(
            f"need more than {n_validation_records + n_test_records} records, "
            f"got {len(records)}"
        )
    ids = [rec.record_id for rec, _ in records]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate record_id in input records")

    order = np.random.default_rng(seed).permutation(len(records))
    assignment: dict[str, str] = {}
    for pos, idx in enumerate(order):
        if pos < n_test_records:
            part = "test"
        elif pos < n_test_records + n_validation_records:
            part = "validation"
        else:
            part = "train"
        assignment[ids[idx]] = part

    ds = SplitDataset(split_manifest=assignment)
    for rec, ann in records:
        if ann.record_id != rec.record_id:
            raise ValueError(
                f"annotation set {ann.record_id!r} does not match record {rec.record_id!r}"
            )
        ann.check_bounds(len(rec))
        bucket = ds.partition(assignment[rec.record_id])
        for e in ann.entries:
            if e.label is None:
                continue
            bucket.append(
                BreathSegment(
                    record_id=rec.record_id,
                    start_idx=e.start_idx,
                    end_idx=e.end_idx,
                    flow=rec.flow[e.start_idx : e.end_idx],
                    pressure=rec.pressure[e.start_idx : e.end_idx],
                    label=e.label,
                )
            )
    if manifest_path is not None:
        write_split_manifest(ds.split_manifest, manifest_path)
    return ds


def write_split_manifest(manifest: dict[str, str], path) -> None:
    with Path(path).open("w", newline="") as fh:
        for record_id in sorted(manifest):
            fh.write(f"{record_id},{manifest[record_id]}\n")


def read_split_manifest(path) -> dict[str, str]:
    manifest: dict[str, str] = {}
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise MalformedRow(f"{path}:{lineno}: expected 'record_id,partition'")
            record_id, part = parts
            if part not in ("train", "validation", "test"):
                raise MalformedRow(f"{path}:{lineno}: unknown partition {part!r}")
            manifest[record_id] = part
    return manifest
