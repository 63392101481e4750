"""``canline`` command-line entry point.

Exit status: 0 success, 2 usage/config/parse error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from canline import __version__
from canline.annotations import (
    AnnotationError,
    DatasetConfig,
    DatasetConfigError,
    parse_annotation_line,
    parse_dataset_config,
    read_labels_dir,
    split_dataset,
    write_annotation_file,
    write_dataset_config,
)
from canline.config import ConfigError, RunConfig, parse_run_config
from canline.controller import run_simulation
from canline.geometry import DEFAULT_CLASS_NAMES, Detection, to_corner_form
from canline.metrics import (
    EmptyGroundTruthError,
    MetricsTableError,
    curve_csv,
    evaluate,
    format_metrics_table,
    ingest_metrics_table,
    summary_line,
)
from canline.synthetic import FRAME_SIZE, STREAM_CAN, FaultRates, generate_can, substream
from canline.telemetry import FileSink, event_log_line

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


class UsageError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _run_manifest(command: str, seed: int | None, outputs: dict, **extra) -> dict:
    return {"artifact": "canline", "version": __version__, "command": command, "seed": seed, **extra, "outputs": outputs}


def cmd_simulate(args) -> int:
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        config = parse_run_config(path.read_text("utf-8"))
    else:
        config = RunConfig()
    if args.n < 0:
        raise UsageError("--n must be >= 0")

    out = Path(args.out)
    outputs = {"events": "events.jsonl", "summary": "summary.json"}
    if config.sink == "file":
        outputs["telemetry"] = "telemetry.log"
    manifest = _run_manifest("simulate", args.seed, outputs, n_cans=args.n, config=config.snapshot())
    _write(out / "run_manifest.json", _dump_json(manifest))

    sink = None
    if config.sink == "file":
        (out / "telemetry.log").write_text("")
        sink = FileSink(out / "telemetry.log")
    try:
        result = run_simulation(
            config.line,
            config.detector,
            config.fault_rates,
            args.n,
            args.seed,
            ocr_profile=config.ocr,
            policy=config.effective_policy(),
            sink=sink,
        )
    finally:
        if sink is not None:
            sink.close()

    _write(out / "events.jsonl", "".join(event_log_line(e) + "\n" for e in result.events))
    summary = result.summary()
    _write(out / "summary.json", _dump_json(summary))
    print(
        f"{summary['n_cans']} cans: {summary['bins']['accepted']} accepted, "
        f"{summary['bins']['rejected']} rejected, {summary['throughput_cpm']:.2f} cans/min"
    )
    return EXIT_OK


def _parse_detection_file(text: str, names, img_size: float) -> list[Detection]:
    dets = []
    for i, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 6:
            raise AnnotationError(f"expected 6 fields (class cx cy w h conf), got {len(fields)}", i)
        a = parse_annotation_line(" ".join(fields[:5]), names, line_no=i)
        try:
            conf = float(fields[5])
        except ValueError:
            raise AnnotationError(f"confidence is not a number: {fields[5]!r}", i) from None
        if not 0.0 <= conf <= 1.0:
            raise AnnotationError(f"confidence out of range: {conf}", i)
        dets.append(Detection(to_corner_form(a.box, img_size, img_size), a.label, conf))
    return dets


def cmd_evaluate(args) -> int:
    names_path = Path(args.names)
    if not names_path.is_file():
        raise UsageError(f"names config not found: {names_path}")
    names = parse_dataset_config(names_path.read_text("utf-8")).class_names
    labels_dir, dets_dir = Path(args.labels), Path(args.detections)
    for d in (labels_dir, dets_dir):
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")

    truth = read_labels_dir(labels_dir, names)
    gts = {stem: [a.to_pixels(args.img_size, args.img_size) for a in anns] for stem, anns in truth.items()}
    dets = {}
    for path in sorted(dets_dir.glob("*.txt")):
        try:
            dets[path.stem] = _parse_detection_file(path.read_text("utf-8"), names, args.img_size)
        except AnnotationError as e:
            raise AnnotationError(f"{path.name}: {e.reason}", e.line_no) from None

    report = evaluate(dets, gts, conf_thresh=args.conf)
    pr = report.pop("pr_curve")
    curves = report.pop("confidence_precision")
    print(_dump_json(report), end="")
    if args.out:
        out = Path(args.out)
        _write(out / "metrics.json", _dump_json(report))
        _write(out / "pr_curve.csv", curve_csv(((p.recall, p.precision) for p in pr), ("recall", "precision")))
        _write(out / "confidence_precision.csv", curve_csv(curves["all"], ("confidence", "precision")))
        for name in names:
            if name in curves:
                _write(out / f"confidence_precision_{name}.csv", curve_csv(curves[name], ("confidence", "precision")))
    return EXIT_OK


def _parse_rates(text: str) -> FaultRates:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"fault rates must be numbers: {text!r}") from None
    if len(values) != 3:
        raise UsageError("--fault-rates takes three values: easy_open,contour,label")
    try:
        return FaultRates(*values)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_gen_dataset(args) -> int:
    rates = _parse_rates(args.fault_rates)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    try:
        split = split_dataset([f"can_{i:06d}" for i in range(1, args.n + 1)], args.ratio, args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None

    out = Path(args.out)
    outputs = {
        "labels": "labels/",
        "manifest": "manifest.jsonl",
        "train": "train.txt",
        "val": "val.txt",
        "dataset_config": "data.yaml",
    }
    manifest = _run_manifest(
        "gen-dataset", args.seed, outputs, n=args.n, ratio=args.ratio, fault_rates=list(rates.as_tuple())
    )
    _write(out / "run_manifest.json", _dump_json(manifest))

    records = []
    for can_id in range(1, args.n + 1):
        can = generate_can(can_id, rates, substream(args.seed, can_id, STREAM_CAN))
        _write(out / "labels" / f"can_{can_id:06d}.txt", write_annotation_file(can.truth_boxes))
        records.append(json.dumps(can.manifest_record(), separators=(",", ":")))
    _write(out / "manifest.jsonl", "".join(r + "\n" for r in records))
    _write(out / "train.txt", "".join(s + "\n" for s in split.train))
    _write(out / "val.txt", "".join(s + "\n" for s in split.val))
    _write(out / "data.yaml", write_dataset_config(DatasetConfig("train.txt", "val.txt", DEFAULT_CLASS_NAMES)))
    print(f"{args.n} cans written to {out}: {len(split.train)} train, {len(split.val)} val")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.metrics_csv)
    if not path.is_file():
        raise UsageError(f"metrics file not found: {path}")
    reports = ingest_metrics_table(path.read_text("utf-8"))
    if not reports:
        raise UsageError("metrics table has no rows")
    print(format_metrics_table(reports))
    print(summary_line(reports[-1]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="canline", description="Canned-goods inspection line simulator and evaluator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the line simulation")
    p.add_argument("--config", help="run config YAML (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100, help="number of cans")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score detections against YOLO annotations")
    p.add_argument("--detections", required=True, help="folder of 'class cx cy w h conf' files")
    p.add_argument("--labels", required=True, help="folder of YOLO annotation files")
    p.add_argument("--names", required=True, help="dataset config with the names list")
    p.add_argument("--conf", type=float, default=0.25, help="confidence threshold for precision/recall")
    p.add_argument("--img-size", type=float, default=float(FRAME_SIZE))
    p.add_argument("--out", help="write metrics.json and curve CSVs here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-dataset", help="write a synthetic annotated dataset")
    p.add_argument("--fault-rates", default="0.2,0.2,0.2", help="easy_open,contour,label")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratio", type=float, default=0.8, help="train fraction")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("report", help="print a training-metrics table")
    p.add_argument("metrics_csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        UsageError,
        ConfigError,
        DatasetConfigError,
        AnnotationError,
        MetricsTableError,
        EmptyGroundTruthError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
