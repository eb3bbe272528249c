"""Labeled synthetic neonatal ventilation waveforms.

Stands in for clinical data so the pipeline can be trained and evaluated
end to end. Flow is a half-sine inspiration followed by a decaying
expiration; pressure is a rounded-square plateau between PEEP and PIP whose
onset is synchronized with flow for mechanical breaths and delayed by the
trigger lead for triggered ones. Artefacts are band-limited noise bursts
oscillating around zero. Unclassifiable breaths are near-even convex
mixtures of the spontaneous and mechanical shapes.

Every chunk boundary is constructed to be a flow zero-crossing (chunks end
negative and start non-negative), so the emitted annotations line up exactly
with what zero-crossing segmentation recovers.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .io import (
    DEFAULT_SAMPLE_RATE_HZ,
    AnnotationEntry,
    AnnotationSet,
    BreathClass,
    N_CLASSES,
    WaveformRecord,
)

INSPIRATION_FRACTION = 0.4
# expiratory flow is clamped at or below this, so added noise can never
# produce spurious zero-crossings inside a breath
EXPIRATION_CEILING = -0.05
PRESSURE_NOISE_RATIO = 0.25
MIX_LAMBDA_RANGE = (0.42, 0.58)


class InvalidTemplate(Exception):
    pass


@dataclass(frozen=True)
class BreathTemplate:
    """Drawn parameters for one synthetic breath."""

    breath_class: BreathClass
    duration_ms: float
    peak_flow: float  # mL/s; oscillation amplitude for artefacts
    peep: float  # mbar
    pip: float  # mbar
    trigger_lead_ms: float = 0.0
    noise_sd: float = 0.0

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise InvalidTemplate("duration_ms must be positive")
        if self.trigger_lead_ms < 0 or self.noise_sd < 0:
            raise InvalidTemplate("trigger_lead_ms and noise_sd must be non-negative")
        ventilated = (
            BreathClass.MECHANICAL,
            BreathClass.TRIGGERED,
            BreathClass.UNCLASSIFIABLE,
        )
        if self.breath_class in ventilated and self.pip < self.peep:
            raise InvalidTemplate(
                f"pip {self.pip} < peep {self.peep} for {self.breath_class.label}"
            )


# (lo, hi) draw ranges per class; plausible neonatal values, chosen so the
# five classes stay well separated in waveform space
DEFAULT_PARAM_RANGES: dict[BreathClass, dict[str, tuple[float, float]]] = {
    BreathClass.ARTEFACT: {
        "duration_ms": (400.0, 900.0),
        "peak_flow": (2.0, 5.0),
        "peep": (4.6, 5.4),
        "pip": (4.6, 5.4),
        "noise_sd": (0.2, 0.4),
    },
    BreathClass.SPONTANEOUS: {
        "duration_ms": (900.0, 1100.0),
        "peak_flow": (26.0, 34.0),
        "peep": (4.6, 5.4),
        "pip": (4.6, 5.4),
        "noise_sd": (0.3, 0.6),
    },
    BreathClass.MECHANICAL: {
        "duration_ms": (1400.0, 1600.0),
        "peak_flow": (46.0, 54.0),
        "peep": (4.6, 5.4),
        "pip": (19.0, 21.0),
        "noise_sd": (0.3, 0.6),
    },
    BreathClass.TRIGGERED: {
        "duration_ms": (1100.0, 1250.0),
        "peak_flow": (38.0, 46.0),
        "peep": (4.6, 5.4),
        "pip": (19.0, 21.0),
        "trigger_lead_ms": (210.0, 270.0),
        "noise_sd": (0.3, 0.6),
    },
    BreathClass.UNCLASSIFIABLE: {
        "duration_ms": (1200.0, 1350.0),
        "peak_flow": (38.0, 46.0),
        "peep": (4.6, 5.4),
        "pip": (19.0, 21.0),
        "noise_sd": (0.3, 0.6),
    },
}

DEFAULT_CLASS_MIX = (0.10, 0.22, 0.26, 0.26, 0.16)


@dataclass(frozen=True)
class RecordProfile:
    """Generation recipe for one synthetic record."""

    seed: int
    class_mix: tuple[float, ...] = DEFAULT_CLASS_MIX
    breaths_per_minute: float = 50.0
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    param_ranges: dict[BreathClass, dict[str, tuple[float, float]]] = field(
        default_factory=lambda: DEFAULT_PARAM_RANGES
    )

    def __post_init__(self):
        mix = np.asarray(self.class_mix, dtype=np.float64)
        if mix.shape != (N_CLASSES,) or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
            raise ValueError("class_mix must be 5 non-negative entries summing to 1")
        if self.breaths_per_minute <= 0:
            raise ValueError("breaths_per_minute must be positive")


def _pressure_support(
    n: int, lead_n: int, insp_n: int, sample_rate_hz: float
) -> np.ndarray:
    """Support curve in [0, 1]: zero before the lead, half-cosine rise to the
    plateau, half-cosine release starting at end of inspiration."""
    rise_n = max(2, round(0.08 * sample_rate_hz))
    fall_n = max(2, round(0.12 * sample_rate_hz))
    t = np.arange(n, dtype=np.float64)
    rise = 0.5 * (1.0 - np.cos(np.pi * np.clip((t - lead_n + 1) / rise_n, 0.0, 1.0)))
    fall = 0.5 * (1.0 + np.cos(np.pi * np.clip((t - insp_n + 1) / fall_n, 0.0, 1.0)))
    return rise * fall


def _base_flow(n: int, insp_n: int, peak_flow: float) -> np.ndarray:
    flow = np.empty(n, dtype=np.float64)
    t_insp = np.arange(insp_n, dtype=np.float64)
    flow[:insp_n] = peak_flow * np.sin(np.pi * t_insp / insp_n)
    u = np.arange(1, n - insp_n + 1, dtype=np.float64)
    u_peak = max(1.0, (n - insp_n) / 4.0)
    flow[insp_n:] = -0.65 * peak_flow * (u / u_peak) * np.exp(1.0 - u / u_peak)
    return flow


def _clean_breath(
    template: BreathTemplate, n: int, rng: np.random.Generator, sample_rate_hz: float
) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free waveforms for one breath of ``n`` samples."""
    cls = template.breath_class
    insp_n = max(2, round(INSPIRATION_FRACTION * n))
    if cls == BreathClass.ARTEFACT:
        # slow oscillation around zero plus band-limited noise
        freq_hz = rng.uniform(1.5, 3.5)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        t = np.arange(n, dtype=np.float64) / sample_rate_hz
        smooth_w = 21
        raw = rng.normal(0.0, 1.0, n + smooth_w - 1)
        wobble = np.convolve(raw, np.ones(smooth_w) / smooth_w, mode="valid")
        wobble /= max(np.sqrt(np.mean(wobble**2)), 1e-12)
        flow = template.peak_flow * (
            np.sin(2.0 * np.pi * freq_hz * t + phase) + 0.35 * wobble
        )
        pressure = np.full(n, template.peep)
        return flow, pressure
    if cls == BreathClass.UNCLASSIFIABLE:
        lam = rng.uniform(*MIX_LAMBDA_RANGE)
        spont = BreathTemplate(
            BreathClass.SPONTANEOUS, template.duration_ms, template.peak_flow,
            template.peep, template.peep,
        )
        mech = BreathTemplate(
            BreathClass.MECHANICAL, template.duration_ms, template.peak_flow,
            template.peep, template.pip,
        )
        flow_s, pres_s = _clean_breath(spont, n, rng, sample_rate_hz)
        flow_m, pres_m = _clean_breath(mech, n, rng, sample_rate_hz)
        return lam * flow_s + (1 - lam) * flow_m, lam * pres_s + (1 - lam) * pres_m

    flow = _base_flow(n, insp_n, template.peak_flow)
    if cls == BreathClass.SPONTANEOUS:
        # unsupported: airway pressure stays near PEEP with a small effort dip
        t = np.arange(n, dtype=np.float64)
        pressure = template.peep - 0.3 * np.sin(np.pi * t / n)
        return flow, pressure

    lead_n = 0
    if cls == BreathClass.TRIGGERED:
        lead_n = round(template.trigger_lead_ms * sample_rate_hz / 1000.0)
        lead_n = min(lead_n, max(0, insp_n - 2))
        # patient-only effort until the ventilator takes over
        flow[:lead_n] *= 0.35
    support = _pressure_support(n, lead_n, insp_n, sample_rate_hz)
    pressure = template.peep + (template.pip - template.peep) * support
    if cls == BreathClass.TRIGGERED and lead_n >= 2:
        t_lead = np.arange(lead_n, dtype=np.float64)
        pressure[:lead_n] -= 0.2 * np.sin(np.pi * t_lead / lead_n)
    return flow, pressure


def generate_breath(
    template: BreathTemplate,
    rng: np.random.Generator,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    n_samples: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One breath's (flow, pressure). Flow starts >= 0, crosses to negative,
    and ends negative, so concatenating breaths yields exactly one
    zero-crossing boundary per breath."""
    n = n_samples if n_samples is not None else round(
        template.duration_ms * sample_rate_hz / 1000.0
    )
    n = max(4, n)
    flow, pressure = _clean_breath(template, n, rng, sample_rate_hz)
    if template.noise_sd > 0:
        flow = flow + rng.normal(0.0, template.noise_sd, n)
        pressure = pressure + rng.normal(
            0.0, PRESSURE_NOISE_RATIO * template.noise_sd, n
        )
    if template.breath_class == BreathClass.ARTEFACT:
        flow[0] = abs(flow[0]) + 0.01
        flow[-1] = -abs(flow[-1]) - 0.05
    else:
        insp_n = max(2, round(INSPIRATION_FRACTION * n))
        np.maximum(flow[:insp_n], 0.0, out=flow[:insp_n])
        np.minimum(flow[insp_n:], EXPIRATION_CEILING, out=flow[insp_n:])
    return flow, pressure


def draw_breath_plan(
    profile: RecordProfile, rng: np.random.Generator, n_breaths: int
) -> list[BreathTemplate]:
    """Sample per-breath classes (from class_mix) and parameters (uniform in
    the profile's per-class ranges)."""
    mix = np.asarray(profile.class_mix, dtype=np.float64)
    classes = rng.choice(N_CLASSES, size=n_breaths, p=mix / mix.sum())
    plan = []
    for code in classes:
        cls = BreathClass(int(code))
        ranges = profile.param_ranges[cls]
        drawn = {key: float(rng.uniform(lo, hi)) for key, (lo, hi) in sorted(ranges.items())}
        plan.append(BreathTemplate(breath_class=cls, **drawn))
    return plan


def _apportion(nominal: list[int], total: int) -> list[int]:
    """Scale nominal chunk lengths to sum exactly to ``total`` (largest
    remainder rounding, minimum 4 samples per chunk)."""
    nominal_arr = np.asarray(nominal, dtype=np.float64)
    target = nominal_arr * (total / nominal_arr.sum())
    floors = np.maximum(np.floor(target).astype(int), 4)
    deficit = total - int(floors.sum())
    if deficit > 0:
        order = np.argsort(-(target - np.floor(target)), kind="stable")
        for i in range(deficit):
            floors[order[i % len(floors)]] += 1
    while deficit < 0:
        j = int(np.argmax(floors))
        take = min(floors[j] - 4, -deficit)
        floors[j] -= take
        deficit += take
        if take == 0:
            raise ValueError("record too short for the requested breath count")
    return floors.tolist()


def generate_record(
    profile: RecordProfile,
    duration_s: float,
    record_id: Optional[str] = None,
) -> tuple[WaveformRecord, AnnotationSet]:
    """Concatenated breaths and artefacts with ground-truth annotations
    aligned to the zero-crossing boundaries segmentation will find.

    The record has exactly round(duration_s * sample_rate_hz) samples. A short
    all-negative lead-in and a non-negative closing stub bracket the breaths so
    the first and last planned chunks both have detectable boundaries.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rate = profile.sample_rate_hz
    rng = np.random.default_rng(profile.seed)
    n_target = round(duration_s * rate)
    n_breaths = max(1, round(duration_s * profile.breaths_per_minute / 60.0))
    lead_n = max(2, round(0.12 * rate))
    tail_n = max(1, round(0.04 * rate))
    budget = n_target - lead_n - tail_n
    if budget < 4 * n_breaths:
        raise ValueError("duration too short for the requested breath rate")

    plan = draw_breath_plan(profile, rng, n_breaths)
    nominal = [max(4, round(t.duration_ms * rate / 1000.0)) for t in plan]
    lengths = _apportion(nominal, budget)

    t_lead = np.arange(lead_n, dtype=np.float64)
    peep_mid = float(np.mean(profile.param_ranges[BreathClass.SPONTANEOUS]["peep"]))
    chunks_flow = [-(1.5 + 2.0 * np.exp(-t_lead / 5.0))]
    chunks_pressure = [np.full(lead_n, peep_mid)]
    chunk_labels: list[Optional[BreathClass]] = [None]
    for template, n in zip(plan, lengths):
        f, p = generate_breath(template, rng, rate, n_samples=n)
        chunks_flow.append(f)
        chunks_pressure.append(p)
        chunk_labels.append(template.breath_class)
    t_tail = np.arange(tail_n, dtype=np.float64)
    chunks_flow.append(0.4 * np.exp(-t_tail / 2.0) + 0.01)
    chunks_pressure.append(np.full(tail_n, peep_mid))
    chunk_labels.append(None)

    flow = np.concatenate(chunks_flow)
    pressure = np.concatenate(chunks_pressure)
    assert len(flow) == n_target

    offsets = np.cumsum([0] + [len(c) for c in chunks_flow])
    crossings = [
        i for i in range(1, len(flow)) if flow[i - 1] < 0.0 and flow[i] >= 0.0
    ]
    entries = []
    for start, end in zip(crossings[:-1], crossings[1:]):
        chunk_idx = bisect_right(offsets, start) - 1
        label = chunk_labels[chunk_idx]
        if label is None:
            continue
        if end > offsets[chunk_idx + 1]:
            raise AssertionError("segment spans a chunk boundary")
        entries.append(AnnotationEntry(start, end, label))

    rid = record_id if record_id is not None else f"synth-{profile.seed:04d}"
    record = WaveformRecord(
        record_id=rid,
        flow=flow,
        pressure=pressure,
        sample_rate_hz=rate,
        start_time_ms=0,
    )
    return record, AnnotationSet(record_id=rid, entries=tuple(entries))


def load_profile(path) -> RecordProfile:
    """Parse a plain key/value profile file.

    Recognized keys: ``seed``, ``breaths_per_minute``, ``sample_rate_hz``,
    ``class_mix`` (5 comma-separated weights), and per-class parameter ranges
    as ``<class>.<param> = lo, hi`` (e.g. ``mechanical.pip = 19, 21``).
    Unspecified values fall back to the defaults.
    """
    seed = 0
    bpm = 50.0
    rate = DEFAULT_SAMPLE_RATE_HZ
    mix = DEFAULT_CLASS_MIX
    ranges = {cls: dict(params) for cls, params in DEFAULT_PARAM_RANGES.items()}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        parts = [v.strip() for v in value.split(",")]
        if key == "seed":
            seed = int(parts[0])
        elif key == "breaths_per_minute":
            bpm = float(parts[0])
        elif key == "sample_rate_hz":
            rate = float(parts[0])
        elif key == "class_mix":
            mix = tuple(float(v) for v in parts)
        elif "." in key:
            cls_name, _, param = key.partition(".")
            cls = BreathClass.from_label(cls_name)
            if len(parts) == 1:
                lo = hi = float(parts[0])
            elif len(parts) == 2:
                lo, hi = float(parts[0]), float(parts[1])
            else:
                raise ValueError(f"{path}:{lineno}: expected 'lo, hi'")
            ranges[cls][param] = (lo, hi)
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return RecordProfile(
        seed=seed,
        class_mix=mix,
        breaths_per_minute=bpm,
        sample_rate_hz=rate,
        param_ranges=ranges,
    )
