from collections import Counter

import numpy as np
import pytest

from breathlens.io import BreathClass, write_record
from breathlens.segmentation import _fixed_length_arrays, segment_breaths
from breathlens.synth import (
    DEFAULT_PARAM_RANGES,
    BreathTemplate,
    InvalidTemplate,
    RecordProfile,
    draw_breath_plan,
    generate_breath,
    generate_record,
    load_profile,
)

from oracles import crossings_reference


def template(cls, **kw):
    base = dict(duration_ms=1200.0, peak_flow=45.0, peep=5.0, pip=20.0, noise_sd=0.0)
    base.update(kw)
    return BreathTemplate(breath_class=cls, **base)


def noise_free_profile(seed, **kw):
    ranges = {
        cls: {**params, "noise_sd": (0.0, 0.0)}
        for cls, params in DEFAULT_PARAM_RANGES.items()
    }
    return RecordProfile(seed=seed, param_ranges=ranges, **kw)


class TestGenerateBreath:
    def test_spontaneous_pressure_stays_near_peep(self, rng):
        t = template(BreathClass.SPONTANEOUS, peep=5.0, pip=5.0)
        _, pressure = generate_breath(t, rng)
        assert np.max(np.abs(pressure - 5.0)) < 0.1 * 15.0  # default pip-peep span

    def test_mechanical_reaches_pip(self, rng):
        t = template(BreathClass.MECHANICAL, peep=5.0, pip=20.0)
        _, pressure = generate_breath(t, rng)
        assert abs(np.max(pressure) - 20.0) < 0.01 * 20.0

    def test_trigger_lead_delays_pressure_onset(self, rng):
        t = template(BreathClass.TRIGGERED, trigger_lead_ms=120.0)
        flow, pressure = generate_breath(t, rng)
        # change-point scan: first sample where support pressure leaves PEEP
        above = np.flatnonzero(pressure - 5.0 > 1e-9)
        assert above[0] == 15  # 0.120 s * 125 Hz
        assert flow[0] >= 0.0

    def test_breath_has_single_boundary_crossing_shape(self, rng):
        for cls in (BreathClass.SPONTANEOUS, BreathClass.MECHANICAL,
                    BreathClass.TRIGGERED, BreathClass.UNCLASSIFIABLE):
            t = template(cls, noise_sd=0.5)
            flow, _ = generate_breath(t, rng)
            assert flow[0] >= 0.0
            assert flow[-1] < 0.0
            assert crossings_reference(flow) == []  # no internal boundary

    def test_artefact_oscillates_around_zero(self, rng):
        t = template(BreathClass.ARTEFACT, peak_flow=4.0, duration_ms=800.0)
        flow, _ = generate_breath(t, rng)
        assert flow[0] >= 0.0 and flow[-1] < 0.0
        assert abs(np.mean(flow)) < 2.0
        assert (flow < 0).any() and (flow > 0).any()

    def test_invalid_template(self):
        with pytest.raises(InvalidTemplate):
            template(BreathClass.MECHANICAL, peep=10.0, pip=5.0)
        with pytest.raises(InvalidTemplate):
            template(BreathClass.SPONTANEOUS, duration_ms=-5.0)


class TestGenerateRecord:
    def test_exact_length_and_pure_mix(self):
        profile = RecordProfile(seed=3, class_mix=(0, 0, 1, 0, 0), breaths_per_minute=40)
        record, ann = generate_record(profile, 60.0)
        assert len(record) == 60 * 125
        assert len(ann.entries) == 40
        assert {e.label for e in ann.entries} == {BreathClass.MECHANICAL}

    def test_artefact_only_mix(self):
        profile = RecordProfile(seed=4, class_mix=(1, 0, 0, 0, 0), breaths_per_minute=60)
        record, ann = generate_record(profile, 30.0)
        assert len(ann.entries) > 0
        assert {e.label for e in ann.entries} == {BreathClass.ARTEFACT}
        # oscillation around zero: the annotated span has near-zero mean and
        # each crossing-delimited segment stays within the oscillation band
        span = record.flow[ann.entries[0].start_idx : ann.entries[-1].end_idx]
        assert abs(np.mean(span)) < 0.5
        for e in ann.entries:
            seg = record.flow[e.start_idx : e.end_idx]
            assert abs(np.mean(seg)) < 6.0

    def test_deterministic_byte_level(self, tmp_path):
        profile = RecordProfile(seed=77)
        paths = []
        for name in ("a.csv", "b.csv"):
            record, _ = generate_record(profile, 20.0)
            path = tmp_path / name
            write_record(record, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_segmentation_recovers_boundaries_noise_free(self):
        record, ann = generate_record(noise_free_profile(31), 90.0)
        segs = segment_breaths(record)
        assert [(s.start_idx, s.end_idx) for s in segs] == [
            (e.start_idx, e.end_idx) for e in ann.entries
        ]

    def test_segmentation_recovers_boundaries_with_noise(self):
        record, ann = generate_record(RecordProfile(seed=32), 90.0)
        segs = segment_breaths(record)
        assert [(s.start_idx, s.end_idx) for s in segs] == [
            (e.start_idx, e.end_idx) for e in ann.entries
        ]


class TestPlanStatistics:
    def test_class_frequencies_match_mix(self):
        profile = RecordProfile(seed=8)
        plan = draw_breath_plan(profile, np.random.default_rng(8), 10_000)
        counts = Counter(t.breath_class for t in plan)
        for cls, target in zip(BreathClass, profile.class_mix):
            assert abs(counts[cls] / 10_000 - target) < 0.02

    def test_parameters_stay_in_ranges(self):
        profile = RecordProfile(seed=9)
        for t in draw_breath_plan(profile, np.random.default_rng(9), 200):
            ranges = DEFAULT_PARAM_RANGES[t.breath_class]
            lo, hi = ranges["duration_ms"]
            assert lo <= t.duration_ms <= hi
            lo, hi = ranges["peak_flow"]
            assert lo <= t.peak_flow <= hi


class TestClassSeparation:
    def test_centroid_distance_exceeds_five_sigma(self):
        """Mean inter-class centroid distance > 5x mean within-class scatter,
        over fixed-length windows drawn from the default parameter ranges."""
        rng = np.random.default_rng(0)
        window = 625
        centroids = {}
        scatters = {}
        for cls in BreathClass:
            stack = []
            for _ in range(120):
                ranges = DEFAULT_PARAM_RANGES[cls]
                drawn = {k: float(rng.uniform(lo, hi))
                         for k, (lo, hi) in sorted(ranges.items())}
                t = BreathTemplate(breath_class=cls, **drawn)
                flow, pressure = generate_breath(t, rng)
                values, _, _, _ = _fixed_length_arrays(flow, pressure, window)
                stack.append(values.ravel())
            stack = np.asarray(stack)
            centroids[cls] = stack.mean(axis=0)
            scatters[cls] = np.sqrt(
                np.mean(np.sum((stack - centroids[cls]) ** 2, axis=1))
            )
        classes = list(BreathClass)
        distances = [
            np.linalg.norm(centroids[a] - centroids[b])
            for i, a in enumerate(classes)
            for b in classes[i + 1 :]
        ]
        ratio = np.mean(distances) / np.mean(list(scatters.values()))
        assert ratio > 5.0, f"separation ratio {ratio:.2f}"


class TestProfileFile:
    def test_parse_profile(self, tmp_path):
        path = tmp_path / "profile.cfg"
        path.write_text(
            "# demo profile\n"
            "seed = 12\n"
            "breaths_per_minute = 44\n"
            "class_mix = 0.2, 0.2, 0.2, 0.2, 0.2\n"
            "mechanical.pip = 18, 22\n"
            "triggered.trigger_lead_ms = 200\n"
        )
        profile = load_profile(path)
        assert profile.seed == 12
        assert profile.breaths_per_minute == 44
        assert profile.class_mix == (0.2, 0.2, 0.2, 0.2, 0.2)
        assert profile.param_ranges[BreathClass.MECHANICAL]["pip"] == (18, 22)
        assert profile.param_ranges[BreathClass.TRIGGERED]["trigger_lead_ms"] == (200, 200)
        # untouched entries fall back to defaults
        assert (profile.param_ranges[BreathClass.SPONTANEOUS]["peak_flow"]
                == DEFAULT_PARAM_RANGES[BreathClass.SPONTANEOUS]["peak_flow"])

    def test_bad_key_rejected(self, tmp_path):
        path = tmp_path / "profile.cfg"
        path.write_text("bogus = 3\n")
        with pytest.raises(ValueError):
            load_profile(path)
