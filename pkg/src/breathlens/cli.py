"""Command-line entry points for the full pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import io as wio
from . import metrics
from .model import (
    ModelFileError,
    XcmConfig,
    classify_batch,
    load_model,
    save_model,
    train,
    windows_from_segments,
)
from .segmentation import (
    BreathSegment,
    fixed_length,
    segment_breaths,
    segments_to_annotation_csv,
)
from .server import DEFAULT_PORT, PORT_ENV_VAR
from .synth import RecordProfile, generate_record, load_profile

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="breathlens", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic records with annotations")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profile", help="key/value profile file (defaults used if omitted)")
    p.add_argument("--records", type=int, default=1)
    p.add_argument("--duration-s", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("segment", help="detect breath boundaries in a record")
    p.add_argument("--record", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a directory of records")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--filters", type=int, nargs=3, metavar=("F2D", "F1D", "FFINAL"),
                   default=(16, 16, 32))
    p.add_argument("--val-records", type=int, default=3)
    p.add_argument("--test-records", type=int, default=5)
    p.add_argument("--class-weighting", action="store_true")

    p = sub.add_parser("eval", help="evaluate a model on annotated records")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", help="restrict to one partition of a split manifest")
    p.add_argument("--partition", default="test",
                   choices=("train", "validation", "test"))
    p.add_argument("--out", help="write the plain-text report here")
    p.add_argument("--json", dest="json_out", help="write the machine-readable report here")

    p = sub.add_parser("explain", help="explain one breath of a record")
    p.add_argument("--model", required=True)
    p.add_argument("--record", required=True)
    p.add_argument("--breath", type=int, required=True, help="breath index within the record")
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="serve records, classifications, and explanations")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--port", type=int,
                   default=int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT)))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static-dir", help="viewer assets to serve under /")
    return parser


def _load_dataset(data_dir: Path):
    pairs = []
    for path in sorted(data_dir.glob("*.csv")):
        if path.name.endswith(".annotations.csv"):
            continue
        record = wio.load_record(path)
        ann_path = path.with_name(path.stem + ".annotations.csv")
        if not ann_path.exists():
            raise wio.WaveformError(f"missing annotations for {path}")
        pairs.append((record, wio.load_annotations(ann_path, record)))
    if not pairs:
        raise wio.WaveformError(f"no record CSVs found in {data_dir}")
    return pairs


def _cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = load_profile(args.profile) if args.profile else RecordProfile(seed=0)
    for i in range(args.records):
        profile = RecordProfile(
            seed=args.seed + i,
            class_mix=base.class_mix,
            breaths_per_minute=base.breaths_per_minute,
            sample_rate_hz=base.sample_rate_hz,
            param_ranges=base.param_ranges,
        )
        record, annotations = generate_record(profile, args.duration_s)
        wio.write_record(record, out_dir / f"{record.record_id}.csv")
        wio.write_annotations(annotations, out_dir / f"{record.record_id}.annotations.csv")
        print(f"wrote {record.record_id}: {len(record)} samples, "
              f"{len(annotations.entries)} annotated breaths")
    return EXIT_OK


def _cmd_segment(args) -> int:
    record = wio.load_record(args.record)
    segments = segment_breaths(record)
    segments_to_annotation_csv(segments, args.out)
    print(f"{record.record_id}: {len(segments)} segments -> {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    pairs = _load_dataset(Path(args.data))
    out_path = Path(args.out)
    dataset = wio.split_dataset(
        pairs,
        seed=args.seed,
        n_validation_records=args.val_records,
        n_test_records=args.test_records,
        manifest_path=out_path.with_suffix(".manifest.csv"),
    )
    config = XcmConfig(
        filters_2d=args.filters[0],
        filters_1d=args.filters[1],
        filters_final=args.filters[2],
        batch_size=args.batch,
        epochs=args.epochs,
        folds=args.folds,
        seed=args.seed,
        lr=args.lr,
        class_weighting=args.class_weighting,
    )
    model, report = train(dataset, config)
    save_model(model, out_path)
    report_path = Path(args.report) if args.report else out_path.with_suffix(".report.json")
    report_path.write_text(report.to_json())
    val = "n/a" if report.validation_accuracy is None else f"{report.validation_accuracy:.4f}"
    print(f"model -> {out_path}  report -> {report_path}  validation accuracy {val}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    pairs = _load_dataset(Path(args.data))
    if args.manifest:
        manifest = wio.read_split_manifest(args.manifest)
        pairs = [
            (rec, ann) for rec, ann in pairs
            if manifest.get(rec.record_id) == args.partition
        ]
        if not pairs:
            raise wio.WaveformError(
                f"no records in partition {args.partition!r} of {args.manifest}"
            )
    segments = []
    for rec, ann in pairs:
        for e in ann.entries:
            if e.label is None:
                continue
            segments.append(BreathSegment(
                record_id=rec.record_id, start_idx=e.start_idx, end_idx=e.end_idx,
                flow=rec.flow[e.start_idx:e.end_idx],
                pressure=rec.pressure[e.start_idx:e.end_idx], label=e.label,
            ))
    if not segments:
        raise wio.WaveformError("no labeled annotation entries to evaluate")
    x, y = windows_from_segments(segments, model.config.window_samples)
    predicted, _ = classify_batch(model, x)
    pred_pairs = [(wio.BreathClass(int(t)), wio.BreathClass(int(p)))
                  for t, p in zip(y, predicted)]
    cm = metrics.confusion(pred_pairs)
    split = metrics.accuracy_split(pred_pairs)
    text = metrics.report(cm, split)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(metrics.report_payload(cm, split), indent=2))
    return EXIT_OK


def _cmd_explain(args) -> int:
    from .gradcam import explain_for_prediction

    model = load_model(args.model)
    record = wio.load_record(args.record)
    segments = segment_breaths(record)
    if not 0 <= args.breath < len(segments):
        raise wio.WaveformError(
            f"breath index {args.breath} out of range: record has {len(segments)} breaths"
        )
    window = fixed_length(segments[args.breath], model.config.window_samples)
    classification, explanation = explain_for_prediction(model, window)
    payload = {
        "record_id": record.record_id,
        "breath_index": args.breath,
        "start_idx": segments[args.breath].start_idx,
        "end_idx": segments[args.breath].end_idx,
        "label": classification.label.label,
        "confidence": classification.confidence,
        "distribution": classification.distribution.tolist(),
        "combined": explanation.combined.tolist(),
        "per_variable": explanation.per_variable.tolist(),
    }
    Path(args.out).write_text(json.dumps(payload, indent=2))
    print(f"breath {args.breath}: {classification.label.label} "
          f"({100 * classification.confidence:.1f}%) -> {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .server import serve

    model = load_model(args.model)
    serve(model, args.data, port=args.port, host=args.host, static_dir=args.static_dir)
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "segment": _cmd_segment,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (wio.WaveformError, ModelFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports anything else
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
